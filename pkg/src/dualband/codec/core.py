"""Latent frame codec: block transform, quantization, entropy coding, R-D report."""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import ConfigurationError, DecodeError, SizingError
from . import transform
from .prior import SCALE_FLOOR, UNIFORM_ROW, PriorModel, fit_prior, round_half_away
from .rangecoder import PRECISION, RangeDecoder, RangeEncoder

MAGIC = b"DBLC"
VERSION = 1
# magic, version, W, H, C, gamma, digest, payload bits
_HEADER = struct.Struct("<4sHHHHf8sI")
# CRC32 of the payload, appended after it
_FOOTER = struct.Struct("<I")
DEFAULT_STEP = 0.25


@dataclass(frozen=True, eq=False)
class LatentCode:
    """Quantized latent of one frame plus its serialized container.

    ``bitstream`` holds the full container (header, payload, CRC32 footer);
    ``bit_length`` counts payload bits only and is what the fog node is
    charged for.
    """

    quantized: np.ndarray
    bitstream: bytes
    bit_length: int
    frame_dims: tuple[int, int, int]  # (W, H, C)

    @property
    def payload(self) -> bytes:
        return self.bitstream[_HEADER.size:-_FOOTER.size]


@dataclass(frozen=True)
class RdReport:
    distortion_mse: float
    rate_bits: int
    lam: float
    compression_ratio: float

    @property
    def objective(self) -> float:
        """Distortion plus ``lam`` times rate."""
        return self.distortion_mse + self.lam * self.rate_bits

    @property
    def bandwidth_reduction(self) -> float:
        return bandwidth_reduction(self.compression_ratio)


def bandwidth_reduction(compression_ratio: float) -> float:
    return 1.0 - compression_ratio


def raw_bits(shape) -> int:
    """Uncompressed size of a frame at 8 bits per sample."""
    return 8 * int(np.prod(shape))


def check_frame(frame) -> np.ndarray:
    arr = np.asarray(frame, dtype=float)
    if arr.ndim != 3:
        raise ConfigurationError(f"frame must be (H, W, C), got shape {arr.shape}", key="frame")
    h, w, c = arr.shape
    if h < 1 or w < 1 or c < 1:
        raise ConfigurationError(f"empty frame shape {arr.shape}", key="frame")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("frame contains non-finite samples", key="frame")
    return arr


def analysis(frame, step: float) -> np.ndarray:
    """Continuous latent of a frame: block transform coefficients / step."""
    return transform.forward(check_frame(frame)) / step


def synthesis(latent, shape, step: float) -> np.ndarray:
    return np.clip(transform.inverse(np.asarray(latent, dtype=float) * step, shape), 0.0, 1.0)


def _check_dims(prior: PriorModel, n: int):
    if prior.dims != n:
        raise ConfigurationError(
            f"prior has {prior.dims} dims but the latent has {n}", key="codec.prior"
        )


def encode_symbols(quantized, prior: PriorModel) -> tuple[bytes, int]:
    """Range-code integer latents under the discretized prior."""
    q = np.asarray(quantized, dtype=np.int64)
    _check_dims(prior, q.size)
    tables = prior.tables
    offset = q - tables.center
    inside = np.abs(offset) <= tables.half
    sym = np.where(inside, offset + tables.half, 2 * tables.half + 1)

    rows = tables.rows
    if inside.all():
        symbols, cum_rows = sym.tolist(), rows
    else:
        symbols, cum_rows = [], []
        for i, s in enumerate(sym.tolist()):
            symbols.append(s)
            cum_rows.append(rows[i])
            if not inside[i]:
                raw = int(offset[i]) & 0xFFFFFFFF
                symbols += [raw >> PRECISION, raw & 0xFFFF]
                cum_rows += [UNIFORM_ROW, UNIFORM_ROW]
    enc = RangeEncoder()
    enc.encode_table(symbols, cum_rows)
    return enc.finish()


def decode_symbols(payload: bytes, prior: PriorModel) -> np.ndarray:
    tables = prior.tables
    dec = RangeDecoder(payload)
    sym, raw = dec.decode_table(tables.rows, tables.escape)
    out = np.asarray(sym, dtype=np.int64) - tables.half + tables.center
    for i, value in raw.items():
        if value >= 1 << 31:
            value -= 1 << 32
        out[i] = tables.center[i] + value
    return out


def pack(code_dims, gamma: float, prior: PriorModel, payload: bytes, bit_length: int) -> bytes:
    w, h, c = code_dims
    header = _HEADER.pack(MAGIC, VERSION, w, h, c, gamma, prior.digest, bit_length)
    return header + payload + _FOOTER.pack(zlib.crc32(payload))


def unpack(data: bytes) -> dict:
    """Parse a container; raises :class:`DecodeError` on any structural defect."""
    if len(data) < _HEADER.size:
        raise DecodeError(f"bitstream shorter than {_HEADER.size}-byte header")
    magic, version, w, h, c, gamma, digest, bits = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DecodeError(f"unsupported version {version}")
    if min(w, h, c) < 1:
        raise DecodeError(f"invalid frame dims {(w, h, c)}")
    if len(data) < _HEADER.size + _FOOTER.size:
        raise DecodeError("bitstream has no checksum footer")
    payload = data[_HEADER.size:-_FOOTER.size]
    if len(payload) != -(-bits // 8):
        raise DecodeError(f"payload has {len(payload)} bytes but header declares {bits} bits")
    (crc,) = _FOOTER.unpack_from(data, len(data) - _FOOTER.size)
    if crc != zlib.crc32(payload):
        raise DecodeError("payload checksum mismatch")
    return dict(dims=(w, h, c), gamma=gamma, digest=digest, bit_length=bits, payload=payload)


def encode(frame, prior: PriorModel, gamma: float = 0.0) -> LatentCode:
    """Quantize ``round(Enc(X))`` and entropy-code it.

    ``gamma`` is only recorded in the header as the requested decoder noise.
    """
    arr = check_frame(frame)
    h, w, c = arr.shape
    latent = analysis(arr, prior.step)
    _check_dims(prior, latent.size)
    q = round_half_away(latent)
    payload, bits = encode_symbols(q, prior)
    dims = (w, h, c)
    return LatentCode(quantized=q, bitstream=pack(dims, gamma, prior, payload, bits),
                      bit_length=bits, frame_dims=dims)


def decode_latent(data, prior: PriorModel) -> tuple[np.ndarray, tuple[int, int, int]]:
    """Entropy-decode a container to integer latents.

    The payload is re-encoded and compared byte for byte, so any stream that
    is not the canonical encoding of some latent is rejected.
    """
    if isinstance(data, LatentCode):
        data = data.bitstream
    info = unpack(bytes(data))
    if info["digest"] != prior.digest:
        raise DecodeError("prior digest mismatch")
    w, h, c = info["dims"]
    _check_dims(prior, transform.latent_length(h, w, c))
    q = decode_symbols(info["payload"], prior)
    again, bits = encode_symbols(q, prior)
    if again != info["payload"] or bits != info["bit_length"]:
        raise DecodeError("payload is corrupt (not a canonical encoding)")
    return q, (w, h, c)


def dequantize(quantized, gamma: float = 0.0, rng=None) -> np.ndarray:
    """Latent seen by the synthesis transform: ``z_hat + gamma * N(0, 1)``."""
    z = np.asarray(quantized, dtype=float)
    if gamma < 0:
        raise ConfigurationError("gamma must be >= 0", key="codec.gamma")
    if gamma == 0:
        return z
    if rng is None:
        raise ConfigurationError("gamma > 0 needs a seeded generator", key="codec.seed")
    return z + gamma * rng.standard_normal(z.shape)


def decode(code, prior: PriorModel, gamma: float = 0.0, seed: int = 0) -> np.ndarray:
    """Reconstruct a frame ``(H, W, C)`` from a :class:`LatentCode` or raw container."""
    q, (w, h, c) = decode_latent(code, prior)
    rng = np.random.default_rng(seed) if gamma > 0 else None
    return synthesis(dequantize(q, gamma, rng), (h, w, c), prior.step)


def rd_report(frame, prior: PriorModel, gamma: float = 0.0, lam: float = 0.0, seed: int = 0) -> RdReport:
    arr = check_frame(frame)
    code = encode(arr, prior, gamma)
    recon = decode(code, prior, gamma, seed)
    mse = float(np.mean((recon - arr) ** 2))
    return RdReport(distortion_mse=mse, rate_bits=code.bit_length, lam=float(lam),
                    compression_ratio=code.bit_length / raw_bits(arr.shape))


def fit_frames_prior(frames, step: float = DEFAULT_STEP, floor: float = SCALE_FLOOR) -> PriorModel:
    """Fit the factorized prior on the latents of a set of frames."""
    frames = list(frames)
    if len(frames) < 2:
        raise SizingError(f"need at least 2 frames to fit a prior, got {len(frames)}")
    shapes = {np.shape(f) for f in frames}
    if len(shapes) != 1:
        raise ConfigurationError(f"frames have mixed shapes {sorted(shapes)}", key="frames")
    latents = np.stack([analysis(f, step) for f in frames])
    return fit_prior(latents, step=step, floor=floor)


class LatentCodec(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` learns the prior, ``transform`` quantizes.

    Parameters
    ----------
    step : float
        Quantization step in intensity units.
    gamma : float
        Decoder noise level, in quantization steps.
    seed : int
        Seed for the decoder noise.
    scale_floor : float
        Lower bound on fitted prior scales.
    """

    def __init__(self, step=DEFAULT_STEP, gamma=0.0, seed=0, scale_floor=SCALE_FLOOR):
        self.step = step
        self.gamma = gamma
        self.seed = seed
        self.scale_floor = scale_floor

    def fit(self, frames, y=None):
        frames = np.asarray(frames, dtype=float)
        if frames.ndim != 4:
            raise ConfigurationError("expected frames of shape (n, H, W, C)", key="frames")
        self.prior_ = fit_frames_prior(frames, self.step, self.scale_floor)
        self.frame_shape_ = frames.shape[1:]
        return self

    def transform(self, frames):
        """Integer latents, one row per frame."""
        check_is_fitted(self, "prior_")
        frames = np.asarray(frames, dtype=float)
        z = np.stack([analysis(f, self.step) for f in frames])
        _check_dims(self.prior_, z.shape[1])
        return round_half_away(z)

    def inverse_transform(self, latents):
        """Frames reconstructed at ``gamma`` from integer latents.

        One generator seeded with ``seed`` draws the noise for all rows in order.
        """
        check_is_fitted(self, "prior_")
        z = np.atleast_2d(np.asarray(latents))
        rng = np.random.default_rng(self.seed) if self.gamma > 0 else None
        return np.stack([synthesis(dequantize(row, self.gamma, rng), self.frame_shape_, self.step)
                         for row in z])

    def encode(self, frame) -> LatentCode:
        check_is_fitted(self, "prior_")
        return encode(frame, self.prior_, self.gamma)

    def decode(self, code, seed=None) -> np.ndarray:
        check_is_fitted(self, "prior_")
        return decode(code, self.prior_, self.gamma, self.seed if seed is None else seed)

    def rd_report(self, frame, lam=0.0) -> RdReport:
        check_is_fitted(self, "prior_")
        return rd_report(frame, self.prior_, self.gamma, lam, self.seed)
