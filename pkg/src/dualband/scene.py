"""Synthetic moving-blocker scenes and the binary trace file format.

The scene is a stand-in for recorded camera/beam-power data: a static
background gradient, one dark rectangular blob per blocker crossing, and a
64-beam received-power profile that drops on the central beams while the
line of sight is blocked.

Frames are ``(H, W, C)`` float arrays with samples on the 1/255 grid and
powers are float32-representable, so a trace survives the file format
bit for bit.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .channel import BandConfig, received_power_dbm
from .errors import ConfigurationError, ParseError

NUM_BEAMS = 64
PEAK_BEAM = 32
BLOCKED_BEAMS = slice(24, 41)
POWER_JITTER_DB = 0.5
PROFILE_CURVATURE_DB = 0.02
PIXEL_NOISE = 0.02
BLOB_INTENSITY = 0.05
BLOB_HALF_WIDTH = 1
MAX_RUN = 3

TRACE_MAGIC = b"DBTR"
TRACE_VERSION = 1
_TRACE_HEADER = struct.Struct("<4sHIHHH")


def los_column(width: int) -> int:
    """Pixel column the line of sight passes through."""
    return width - 4


def blob_rows(height: int) -> slice:
    return slice(height // 4, height - height // 4)


@dataclass(frozen=True)
class ScenarioConfig:
    num_steps: int = 100
    distance_m: float = 10.6
    blocker_crossings: int = 30
    blocker_speed: int = 5
    frame_dims: tuple = (32, 16, 3)  # (W, H, C)
    seed: int = 0
    blocked_power_drop_db: float = 20.0

    def __post_init__(self):
        w, h, c = self.frame_dims
        if self.num_steps < 1:
            raise ConfigurationError("num_steps must be >= 1", key="scenario.num_steps")
        if self.blocker_crossings < 0:
            raise ConfigurationError("blocker_crossings must be >= 0", key="scenario.blocker_crossings")
        if w < 8 or h < 8 or c < 1:
            raise ConfigurationError(f"frame dims {self.frame_dims} below 8x8x1", key="scenario.frame_dims")
        if self.blocker_speed <= BLOB_HALF_WIDTH:
            raise ConfigurationError(
                f"blocker_speed must exceed the blob half width ({BLOB_HALF_WIDTH})",
                key="scenario.blocker_speed",
            )
        if not self.distance_m > 0:
            raise ConfigurationError("distance_m must be > 0", key="scenario.distance_m")
        if self.blocked_power_drop_db < 0:
            raise ConfigurationError("blocked_power_drop_db must be >= 0", key="scenario.blocked_power_drop_db")
        k = self.blocker_crossings
        if k and 2 * k - 1 > self.num_steps:
            raise ConfigurationError(
                f"{k} separated crossings need at least {2 * k - 1} steps, have {self.num_steps}",
                key="scenario.blocker_crossings",
            )


@dataclass(frozen=True, eq=False)
class LinkTrace:
    """Per-step ground truth.

    frames : (T, H, W, C) intensities in [0, 1]
    powers : (T, 64) received power per beam in dBm
    blocked : (T,) uint8 link condition, 1 = NLOS
    """

    frames: np.ndarray
    powers: np.ndarray
    blocked: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.blocked)
        if len(self.frames) != n or len(self.powers) != n:
            raise ConfigurationError("frames, powers and blocked must share one length", key="trace")
        if self.powers.ndim != 2 or self.powers.shape[1] != NUM_BEAMS:
            raise ConfigurationError(f"powers must be (T, {NUM_BEAMS})", key="trace.powers")
        if self.frames.ndim != 4:
            raise ConfigurationError("frames must be (T, H, W, C)", key="trace.frames")
        if not np.isin(self.blocked, (0, 1)).all():
            raise ConfigurationError("blocked flags must be 0 or 1", key="trace.blocked")

    def __len__(self) -> int:
        return len(self.blocked)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LinkTrace):
            return NotImplemented
        return (
            np.array_equal(self.frames, other.frames)
            and np.array_equal(self.powers, other.powers)
            and np.array_equal(self.blocked, other.blocked)
        )

    @property
    def frame_dims(self) -> tuple[int, int, int]:
        _, h, w, c = self.frames.shape
        return (w, h, c)

    def with_frames(self, frames) -> "LinkTrace":
        return LinkTrace(np.asarray(frames), self.powers, self.blocked, dict(self.meta))


def blockage_runs(blocked) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive ``(start, end)`` pairs."""
    a = np.asarray(blocked, dtype=np.int8)
    edges = np.diff(np.concatenate([[0], a, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def _schedule(cfg: ScenarioConfig, rng: np.random.Generator) -> list[tuple[int, int]]:
    k, n = cfg.blocker_crossings, cfg.num_steps
    if k == 0:
        return []
    lengths = rng.integers(1, MAX_RUN + 1, size=k)
    # shorten the longest runs until the crossings fit with one clear step between them
    while lengths.sum() + k - 1 > n:
        lengths[np.argmax(lengths)] -= 1
    free = int(n - lengths.sum() - (k - 1))
    bars = np.sort(rng.choice(free + k, size=k, replace=False))
    extra = np.diff(np.concatenate([[-1], bars, [free + k]])) - 1
    runs = []
    t = int(extra[0])
    for i in range(k):
        start = t
        end = start + int(lengths[i]) - 1
        runs.append((start, end))
        t = end + 2 + int(extra[i + 1])
    return runs


def _blob_center(run: tuple[int, int], t: int, los: int, speed: int) -> int:
    start, end = run
    if t < start:
        return los - speed * (start - t)
    if t > end:
        return los + speed * (t - end)
    return los


def background(width: int, height: int, channels: int) -> np.ndarray:
    x = np.linspace(0.0, 1.0, width)[None, :, None]
    y = np.linspace(0.0, 1.0, height)[:, None, None]
    c = np.arange(channels)[None, None, :]
    return 0.25 + 0.55 * x + 0.1 * y + 0.04 * c


def power_profile(distance_m: float) -> np.ndarray:
    """Unblocked beam profile (dBm), peaking at the mmWave LOS link budget."""
    peak = received_power_dbm(BandConfig.mmwave(), distance_m)
    beams = np.arange(NUM_BEAMS)
    return peak - PROFILE_CURVATURE_DB * (beams - PEAK_BEAM) ** 2


def generate_trace(cfg: ScenarioConfig) -> LinkTrace:
    """Deterministic synthetic trace for ``cfg`` (numpy PCG64 seeded with ``cfg.seed``)."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_steps
    w, h, c = cfg.frame_dims
    runs = _schedule(cfg, rng)

    blocked = np.zeros(n, dtype=np.uint8)
    for start, end in runs:
        blocked[start:end + 1] = 1

    powers = power_profile(cfg.distance_m)[None, :] + rng.normal(0.0, POWER_JITTER_DB, (n, NUM_BEAMS))
    powers[blocked == 1, BLOCKED_BEAMS] -= cfg.blocked_power_drop_db
    powers = powers.astype(np.float32).astype(np.float64)

    noise = rng.normal(0.0, PIXEL_NOISE, (n, h, w, c))
    frames = background(w, h, c)[None] + noise
    los = los_column(w)
    rows = blob_rows(h)
    for t in range(n):
        for run in runs:
            x = _blob_center(run, t, los, cfg.blocker_speed)
            lo, hi = max(x - BLOB_HALF_WIDTH, 0), min(x + BLOB_HALF_WIDTH, w - 1)
            if lo <= hi:
                frames[t, rows, lo:hi + 1, :] = BLOB_INTENSITY + noise[t, rows, lo:hi + 1, :]
    frames = np.round(np.clip(frames, 0.0, 1.0) * 255.0) / 255.0

    meta = dict(seed=cfg.seed, distance_m=cfg.distance_m, runs=runs)
    return LinkTrace(frames=frames, powers=powers, blocked=blocked, meta=meta)


def _record_size(w: int, h: int, c: int) -> int:
    return 1 + 4 * NUM_BEAMS + w * h * c


def trace_to_bytes(trace: LinkTrace) -> bytes:
    w, h, c = trace.frame_dims
    parts = [_TRACE_HEADER.pack(TRACE_MAGIC, TRACE_VERSION, len(trace), w, h, c)]
    pixels = np.round(np.clip(trace.frames, 0.0, 1.0) * 255.0).astype(np.uint8)
    powers = trace.powers.astype("<f4")
    for t in range(len(trace)):
        parts.append(bytes([int(trace.blocked[t])]))
        parts.append(powers[t].tobytes())
        parts.append(pixels[t].tobytes())
    return b"".join(parts)


def trace_from_bytes(data: bytes) -> LinkTrace:
    if not data:
        raise ParseError("empty trace file")
    if len(data) < _TRACE_HEADER.size:
        raise ParseError(f"trace header truncated ({len(data)} of {_TRACE_HEADER.size} bytes)")
    magic, version, n, w, h, c = _TRACE_HEADER.unpack_from(data)
    if magic != TRACE_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {TRACE_MAGIC!r}")
    if version != TRACE_VERSION:
        raise ParseError(f"unsupported trace version {version}")
    if n < 1:
        raise ParseError("trace declares zero steps")
    if w < 1 or h < 1 or c < 1:
        raise ParseError(f"invalid frame dims {(w, h, c)}")
    rec = _record_size(w, h, c)
    body = memoryview(data)[_TRACE_HEADER.size:]
    if len(body) != n * rec:
        bad = min(len(body) // rec, n - 1)
        raise ParseError(
            f"record {bad}: body is {len(body)} bytes, expected {n} records of {rec} bytes "
            f"(1 flag + {NUM_BEAMS} float32 powers + {w * h * c} samples)"
        )
    records = np.frombuffer(body, dtype=np.uint8).reshape(n, rec)
    blocked = records[:, 0].copy()
    bad_flags = np.flatnonzero(blocked > 1)
    if bad_flags.size:
        t = int(bad_flags[0])
        raise ParseError(f"record {t}: blocked flag {blocked[t]} not in {{0, 1}}")
    powers = records[:, 1:1 + 4 * NUM_BEAMS].copy().view("<f4").astype(np.float64)
    bad_rows = np.flatnonzero(~np.isfinite(powers).all(axis=1))
    if bad_rows.size:
        raise ParseError(f"record {int(bad_rows[0])}: non-finite power value")
    frames = records[:, 1 + 4 * NUM_BEAMS:].reshape(n, h, w, c).astype(np.float64) / 255.0
    return LinkTrace(frames=frames, powers=powers, blocked=blocked)


def export_trace(trace: LinkTrace, path) -> None:
    atomic_write(path, trace_to_bytes(trace))


def import_trace(path) -> LinkTrace:
    return trace_from_bytes(Path(path).read_bytes())
