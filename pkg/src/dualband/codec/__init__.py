"""Toy latent compression: block DCT, Gaussian prior, range coding."""
from .core import (
    DEFAULT_STEP,
    LatentCode,
    LatentCodec,
    RdReport,
    analysis,
    bandwidth_reduction,
    decode,
    decode_latent,
    decode_symbols,
    dequantize,
    encode,
    encode_symbols,
    fit_frames_prior,
    raw_bits,
    rd_report,
    synthesis,
)
from .prior import PriorModel, fit_prior, gaussian_mass, round_half_away


def discrete_prob(prior: PriorModel, dim: int, value: int) -> float:
    """``P(v) = CDF(v + 0.5) - CDF(v - 0.5)`` under the prior of one dimension."""
    return prior.prob(dim, value)


__all__ = [
    "DEFAULT_STEP",
    "LatentCode",
    "LatentCodec",
    "PriorModel",
    "RdReport",
    "analysis",
    "bandwidth_reduction",
    "decode",
    "decode_latent",
    "decode_symbols",
    "dequantize",
    "discrete_prob",
    "encode",
    "encode_symbols",
    "fit_frames_prior",
    "fit_prior",
    "gaussian_mass",
    "raw_bits",
    "rd_report",
    "round_half_away",
    "synthesis",
]
