"""Factorized Gaussian prior over latent dimensions and its discretization."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..channel import normal_cdf
from ..errors import ConfigurationError
from .rangecoder import TOTAL

MAX_HALF_WIDTH = 255
SCALE_FLOOR = 1e-3
# symbols kept explicitly per dim: center +- ceil(TAIL_SIGMAS * scale) + 1
TAIL_SIGMAS = 8.0
UNIFORM_ROW = range(TOTAL + 1)


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def _tail(z):
    """``Phi(-|z|)``: the smaller of the two tail masses at ``z``."""
    return normal_cdf(-np.abs(z))


def _mass_from_z(zl, zh, tl, th):
    # above the mean: P(Z > zl) - P(Z > zh); below: P(Z < zh) - P(Z < zl);
    # straddling: 1 - both tails
    above = zl >= 0
    below = zh <= 0
    return np.where(above, tl - th, np.where(below, th - tl, 1.0 - tl - th))


def gaussian_mass(lo, hi, mean, scale):
    """Probability of ``[lo, hi)`` under ``N(mean, scale^2)``.

    Differences are taken between tail masses on the same side of the mean so
    small probabilities keep full relative precision.
    """
    zl = (np.asarray(lo, dtype=float) - mean) / scale
    zh = (np.asarray(hi, dtype=float) - mean) / scale
    return _mass_from_z(zl, zh, _tail(zl), _tail(zh))


@dataclass(frozen=True, eq=False)
class PriorModel:
    """Per-dimension Gaussian ``N(mean[i], scale[i]^2)`` over latents.

    ``step`` is the quantization step in intensity units: latents are block
    transform coefficients divided by ``step``. It is part of the model so the
    digest covers everything the decoder needs.
    """

    mean: np.ndarray
    scale: np.ndarray
    step: float = 0.25

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        scale = np.asarray(self.scale, dtype=float).reshape(-1)
        if mean.shape != scale.shape:
            raise ConfigurationError("prior mean and scale lengths differ", key="prior")
        if not np.all(np.isfinite(mean)) or not np.all(scale > 0) or not np.all(np.isfinite(scale)):
            raise ConfigurationError("prior needs finite means and positive scales", key="prior")
        if not self.step > 0:
            raise ConfigurationError("step must be > 0", key="codec.step")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)

    @property
    def dims(self) -> int:
        return self.mean.size

    @cached_property
    def digest(self) -> bytes:
        h = hashlib.blake2b(digest_size=8)
        h.update(np.ascontiguousarray(self.mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.scale, dtype="<f8").tobytes())
        h.update(float(self.step).hex().encode())
        return h.digest()

    def prob(self, dim: int, value):
        """``CDF(value + 0.5) - CDF(value - 0.5)`` for one dimension."""
        if not 0 <= dim < self.dims:
            raise ConfigurationError(f"dim {dim} outside [0, {self.dims})", key="dim")
        v = np.asarray(value, dtype=float)
        p = gaussian_mass(v - 0.5, v + 0.5, self.mean[dim], self.scale[dim])
        return float(p) if np.ndim(p) == 0 else p

    def probs(self, quantized) -> np.ndarray:
        """Vector of per-dimension probabilities of ``quantized``."""
        q = np.asarray(quantized, dtype=float)
        return gaussian_mass(q - 0.5, q + 0.5, self.mean, self.scale)

    def ideal_bits(self, quantized) -> float:
        """``-sum log2 P(z_i)``: the rate an ideal entropy coder would reach."""
        p = self.probs(quantized)
        with np.errstate(divide="ignore"):
            return float(-np.sum(np.log2(p)))

    @cached_property
    def tables(self) -> "CodingTables":
        return CodingTables.build(self)


@dataclass(frozen=True)
class CodingTables:
    """Integer frequency tables derived from a prior.

    Dimension ``i`` codes offsets ``-half[i] .. half[i]`` around ``center[i]``
    as symbols ``0 .. 2*half[i]``; symbol ``2*half[i] + 1`` is the escape for
    anything outside, followed by the raw 32-bit offset.
    """

    center: np.ndarray
    half: np.ndarray
    rows: list
    escape: list

    @classmethod
    def build(cls, prior: PriorModel) -> "CodingTables":
        center = round_half_away(prior.mean)
        half = np.clip(np.ceil(TAIL_SIGMAS * prior.scale).astype(np.int64) + 1, 1, MAX_HALF_WIDTH)
        width = int(2 * half.max() + 1)
        j = np.arange(width)[None, :]
        edges = center[:, None] - half[:, None] - 0.5 + np.arange(width + 1)[None, :]
        z = (edges - prior.mean[:, None]) / prior.scale[:, None]
        tail = _tail(z)
        mass = _mass_from_z(z[:, :-1], z[:, 1:], tail[:, :-1], tail[:, 1:])
        valid = j < (2 * half[:, None] + 1)
        mass = np.where(valid, mass, 0.0)
        esc_mass = np.clip(1.0 - mass.sum(axis=1), 0.0, 1.0)

        nsym = 2 * half + 2
        budget = (TOTAL - nsym)[:, None]
        freq = np.zeros((prior.dims, width + 1), dtype=np.int64)
        freq[:, :width] = np.where(valid, 1 + np.floor(mass * budget).astype(np.int64), 0)
        esc_col = 2 * half + 1
        rows_idx = np.arange(prior.dims)
        freq[rows_idx, esc_col] = 1 + np.floor(esc_mass * budget[:, 0]).astype(np.int64)
        leftover = TOTAL - freq.sum(axis=1)
        assert np.all(leftover >= 0)
        freq[rows_idx, np.argmax(mass, axis=1)] += leftover

        cum = np.zeros((prior.dims, width + 2), dtype=np.int64)
        np.cumsum(freq, axis=1, out=cum[:, 1:])
        rows = [cum[i, : nsym[i] + 1].tolist() for i in range(prior.dims)]
        return cls(center=center, half=half, rows=rows, escape=esc_col.tolist())


def check_frequencies(tables: CodingTables) -> None:
    """Assert every row is a strictly increasing table ending at TOTAL."""
    for row in tables.rows:
        assert row[0] == 0 and row[-1] == TOTAL
        assert all(b > a for a, b in zip(row, row[1:]))


def fit_prior(latents: np.ndarray, step: float, floor: float = SCALE_FLOOR) -> PriorModel:
    """Empirical per-dimension mean and standard deviation of ``latents`` (n, D)."""
    if not math.isfinite(floor) or floor <= 0:
        raise ConfigurationError("scale floor must be positive", key="codec.scale_floor")
    z = np.asarray(latents, dtype=float)
    scale = np.maximum(z.std(axis=0), floor)
    return PriorModel(mean=z.mean(axis=0), scale=scale, step=step)
