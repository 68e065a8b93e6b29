"""Observation windows, future-blockage labels, balancing and splitting."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BalanceError, ConfigurationError, SizingError
from .scene import LinkTrace

DEFAULT_FRACTIONS = (0.7, 0.2, 0.1)


@dataclass(frozen=True, eq=False)
class WindowedSample:
    """``r`` consecutive observations ending at ``origin_index`` and the label
    for the ``r'`` steps after it.

    ``frames`` and ``powers`` are views into the source trace.
    """

    frames: np.ndarray
    powers: np.ndarray
    label: int
    origin_index: int

    @property
    def window(self) -> int:
        return len(self.powers)


def future_label(blocked, tau: int, r_prime: int) -> int:
    """1 if the link is blocked at any of ``tau+1 .. tau+r_prime``."""
    return int(np.any(np.asarray(blocked)[tau + 1: tau + 1 + r_prime]))


def window_and_label(trace: LinkTrace, r: int, r_prime: int) -> list[WindowedSample]:
    """One sample per ``tau`` in ``[r-1, T-r'-1]``.

    Only future steps count toward the label; a blockage active at ``tau``
    itself does not.
    """
    if r < 1:
        raise ConfigurationError("r must be >= 1", key="dataset.r")
    if r_prime < 1:
        raise ConfigurationError("r_prime must be >= 1", key="dataset.r_prime")
    n = len(trace)
    if n < r + r_prime:
        raise SizingError(f"trace has {n} steps; windowing with r={r}, r'={r_prime} needs at least {r + r_prime}")
    a = np.asarray(trace.blocked, dtype=np.int64)
    # label[tau] = any(a[tau+1 .. tau+r']) via a sliding sum
    csum = np.concatenate([[0], np.cumsum(a)])
    taus = np.arange(r - 1, n - r_prime)
    labels = (csum[taus + 1 + r_prime] - csum[taus + 1]) > 0
    return [
        WindowedSample(
            frames=trace.frames[tau - r + 1: tau + 1],
            powers=trace.powers[tau - r + 1: tau + 1],
            label=int(lab),
            origin_index=int(tau),
        )
        for tau, lab in zip(taus.tolist(), labels.tolist())
    ]


def labels_of(samples: Sequence[WindowedSample]) -> np.ndarray:
    return np.fromiter((s.label for s in samples), dtype=np.int64, count=len(samples))


def balance(samples: Sequence[WindowedSample], seed: int = 0) -> list[WindowedSample]:
    """Undersample the majority class to the minority count.

    The kept samples stay in their input order.
    """
    y = labels_of(samples)
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if pos.size == 0 or neg.size == 0:
        raise BalanceError(f"cannot balance a single-class set ({pos.size} positive, {neg.size} negative)")
    rng = np.random.default_rng(seed)
    keep_n = min(pos.size, neg.size)
    if pos.size > keep_n:
        pos = rng.choice(pos, size=keep_n, replace=False)
    elif neg.size > keep_n:
        neg = rng.choice(neg, size=keep_n, replace=False)
    keep = np.sort(np.concatenate([pos, neg]))
    return [samples[i] for i in keep]


@dataclass(frozen=True, eq=False)
class SplitDataset:
    train: list
    val: list
    test: list
    fractions: tuple = DEFAULT_FRACTIONS
    seed: int = 0

    def __iter__(self):
        return iter((self.train, self.val, self.test))


def _check_fractions(fractions) -> tuple[float, ...]:
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f <= 0 for f in fr):
        raise ConfigurationError(f"fractions must be three positive numbers, got {fractions}", key="dataset.fractions")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigurationError(f"fractions sum to {sum(fr)}, not 1", key="dataset.fractions")
    return fr


def split(samples: Sequence, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> SplitDataset:
    """Seeded shuffle, then contiguous cuts at ``floor(f1*n)`` and ``floor((f1+f2)*n)``."""
    fr = _check_fractions(fractions)
    n = len(samples)
    if n == 0:
        raise SizingError("cannot split an empty sample set")
    order = np.random.default_rng(seed).permutation(n)
    # tolerance keeps e.g. (0.7 + 0.2) * 100 from flooring to 89
    c1 = math.floor(fr[0] * n + 1e-9)
    c2 = math.floor((fr[0] + fr[1]) * n + 1e-9)
    pick = [samples[i] for i in order]
    return SplitDataset(train=pick[:c1], val=pick[c1:c2], test=pick[c2:], fractions=fr, seed=seed)
