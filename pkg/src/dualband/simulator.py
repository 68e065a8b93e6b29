"""Dual-band switching runs and the experiment sweeps built on them.

Per step ``t`` a policy picks a band, the realized channel uses the true
blockage flag ``a[t]``, and throughput/BER follow from the realized SNR.
Under switching the predictor sees the window of ``r`` observations ending at
``t - 1`` (frames after the fog->cloud codec) and its decision selects the
band used at ``t``.
"""
from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from joblib import Parallel, delayed

from .channel import BandConfig, channel_state, qpsk_ber, shannon_capacity_bps
from .codec import LatentCodec, PriorModel, decode, encode, fit_frames_prior, raw_bits
from .dataset import WindowedSample, balance, future_label, split, window_and_label
from .errors import ConfigurationError, SizingError
from .predictor import (
    OraclePredictor,
    evaluate,
    predict,
    train_logistic,
    uses_observations,
)
from .scene import LinkTrace, ScenarioConfig, generate_trace

STEP_DURATION_S = 1.0 / 6.5
MAX_GAMMA = 1.5


class PolicyMode(enum.Enum):
    MMWAVE_ONLY = "mmwave"
    SUB6_ONLY = "sub6"
    SWITCHING = "switching"


@dataclass(frozen=True)
class PolicyConfig:
    """How a run chooses its band.

    ``window`` is the observation length ``r`` given to the predictor and
    ``horizon`` the number of future steps its sample labels cover; with the
    default ``horizon=1`` the label of the window ending at ``t - 1`` is
    ``a[t]``.
    """

    mode: PolicyMode
    predictor: Any = None
    gamma: float = 0.0
    lam: float = 0.0
    window: int = 5
    horizon: int = 1
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.mode, PolicyMode):
            raise ConfigurationError(f"unknown policy mode {self.mode!r}", key="policy.mode")
        if self.mode is PolicyMode.SWITCHING and self.predictor is None:
            raise ConfigurationError("switching needs a predictor", key="policy.predictor")
        if not 0.0 <= self.gamma <= MAX_GAMMA:
            raise ConfigurationError(f"gamma must lie in [0, {MAX_GAMMA}]", key="codec.gamma")
        if self.lam < 0:
            raise ConfigurationError("lambda must be >= 0", key="codec.lambda")
        if self.window < 1:
            raise ConfigurationError("window must be >= 1", key="dataset.r")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1", key="policy.horizon")

    @property
    def name(self) -> str:
        return self.mode.value


@dataclass(frozen=True)
class StepMetrics:
    step: int
    band: str
    blocked: int
    predicted: int  # -1 when no prediction was made
    snr_db: float
    throughput_bps: float
    cumulative_bits: float
    ber: float
    fog_bits: int


STEP_FIELDS = [f for f in StepMetrics.__dataclass_fields__]


@dataclass(frozen=True)
class RunReport:
    policy: str
    steps: list
    step_duration_s: float
    raw_bits_per_frame: int
    accuracy: float = math.nan

    @property
    def cumulative_bits(self) -> float:
        return self.steps[-1].cumulative_bits if self.steps else 0.0

    @property
    def mean_ber(self) -> float:
        return float(np.mean([s.ber for s in self.steps])) if self.steps else math.nan

    @property
    def total_fog_bits(self) -> int:
        return int(sum(s.fog_bits for s in self.steps))

    @property
    def bandwidth_reduction(self) -> float:
        raw = self.raw_bits_per_frame * len(self.steps)
        return 1.0 - self.total_fog_bits / raw

    def summary(self) -> dict:
        return dict(
            policy=self.policy,
            num_steps=len(self.steps),
            cumulative_bits=self.cumulative_bits,
            mean_ber=self.mean_ber,
            accuracy=None if math.isnan(self.accuracy) else self.accuracy,
            total_fog_bits=self.total_fog_bits,
            bandwidth_reduction=self.bandwidth_reduction,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(STEP_FIELDS)
        for s in self.steps:
            writer.writerow([_fmt(getattr(s, f)) for f in STEP_FIELDS])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = dict(summary=self.summary(), steps=[asdict(s) for s in self.steps])
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _step_samples(trace: LinkTrace, frames, policy: PolicyConfig) -> dict[int, WindowedSample]:
    """Samples keyed by the step they decide; the window ends one step earlier."""
    r, h = policy.window, policy.horizon
    n = len(trace)
    out = {}
    needs_history = uses_observations(policy.predictor)
    # observation-free predictors only read the label, so they need no warm-up
    first = r if needs_history else 0
    for t in range(first, n):
        tau = t - 1
        lo = max(tau - r + 1, 0)
        out[t] = WindowedSample(
            frames=frames[lo:tau + 1],
            powers=trace.powers[lo:tau + 1],
            label=future_label(trace.blocked, tau, h),
            origin_index=tau,
        )
    return out


def run(
    trace: LinkTrace,
    bands: tuple[BandConfig, BandConfig],
    policy: PolicyConfig,
    prior: PriorModel | None = None,
    step_duration_s: float = STEP_DURATION_S,
    distance_m: float | None = None,
    count_fog_bits: bool = True,
) -> RunReport:
    """Simulate one policy over ``trace``.

    Fixed-band policies ship raw frames, so each step costs ``8*W*H*C``
    fog bits. Switching entropy-codes every frame under ``prior`` (fitted on
    the trace when omitted) and is charged the coded length. Steps without a
    prediction (window not yet full) use Sub-6. ``count_fog_bits=False``
    skips all codec work and leaves ``fog_bits`` at 0.
    """
    mmwave, sub6 = bands
    if not step_duration_s > 0:
        raise ConfigurationError("step_duration_s must be > 0", key="simulate.step_duration_s")
    if distance_m is None:
        distance_m = trace.meta.get("distance_m", 10.6)
    n = len(trace)
    _, h, w, c = trace.frames.shape
    raw = raw_bits((h, w, c))

    fog = np.zeros(n, dtype=np.int64)
    decisions = np.full(n, -1, dtype=np.int64)
    accuracy = math.nan
    if policy.mode is PolicyMode.SWITCHING:
        needs_frames = uses_observations(policy.predictor)
        if needs_frames and n <= policy.window:
            raise SizingError(f"switching with window {policy.window} needs more than {policy.window} steps, have {n}")
        if count_fog_bits or needs_frames:
            if prior is None:
                prior = fit_frames_prior(trace.frames)
            codes = [encode(f, prior, policy.gamma) for f in trace.frames]
            fog[:] = [code.bit_length for code in codes]
        frames = trace.frames
        if needs_frames:
            frames = np.stack([
                decode(code, prior, policy.gamma, seed=(policy.seed, t)) for t, code in enumerate(codes)
            ])
        if not count_fog_bits:
            fog[:] = 0
        samples = _step_samples(trace, frames, policy)
        if samples:
            idx = sorted(samples)
            ordered = [samples[t] for t in idx]
            _, dec = predict(policy.predictor, ordered)
            decisions[idx] = dec
            accuracy = evaluate(policy.predictor, ordered).accuracy
    elif count_fog_bits:
        fog[:] = raw

    rows = []
    total = 0.0
    for t in range(n):
        a = int(trace.blocked[t])
        if policy.mode is PolicyMode.MMWAVE_ONLY:
            band = mmwave
        elif policy.mode is PolicyMode.SUB6_ONLY:
            band = sub6
        else:
            # only the decision selects the band; a[t] enters the channel alone
            band = mmwave if decisions[t] == 0 else sub6
        state = channel_state(band, a, distance_m)
        rate = shannon_capacity_bps(band, state.snr_db)
        total += rate * step_duration_s
        rows.append(StepMetrics(
            step=t,
            band=band.name,
            blocked=a,
            predicted=int(decisions[t]),
            snr_db=state.snr_db,
            throughput_bps=rate,
            cumulative_bits=total,
            ber=float(qpsk_ber(state.snr_db)),
            fog_bits=int(fog[t]),
        ))
    return RunReport(policy=policy.name, steps=rows, step_duration_s=step_duration_s,
                     raw_bits_per_frame=raw, accuracy=accuracy)


def default_policies(predictor=None, **kwargs) -> list[PolicyConfig]:
    """MMWAVE_ONLY, SUB6_ONLY and SWITCHING (oracle unless ``predictor`` is given)."""
    return [
        PolicyConfig(PolicyMode.MMWAVE_ONLY, **kwargs),
        PolicyConfig(PolicyMode.SUB6_ONLY, **kwargs),
        PolicyConfig(PolicyMode.SWITCHING, predictor=predictor or OraclePredictor(), **kwargs),
    ]


# -- sweeps -----------------------------------------------------------------

SWEEP_FIELDS = ["count", "policy", "seed", "metric"]


def _sweep_cell(base: ScenarioConfig, count: int, seed: int, bands, policies, step_duration_s, attr):
    trace = generate_trace(replace(base, blocker_crossings=count, seed=seed))
    out = []
    for policy in policies:
        report = run(trace, bands, policy, step_duration_s=step_duration_s, count_fog_bits=False)
        out.append(dict(count=count, policy=policy.name, seed=seed, metric=float(getattr(report, attr))))
    return out


def _sweep(counts, policies, seeds, base, bands, step_duration_s, jobs, attr) -> list[dict]:
    counts = list(counts)
    if not counts:
        raise ConfigurationError("sweep needs at least one blockage count", key="sweep.counts")
    base = base or ScenarioConfig()
    bands = bands or (BandConfig.mmwave(), BandConfig.sub6())
    policies = list(policies) if policies is not None else default_policies()
    cells = [(k, s) for k in counts for s in seeds]
    if jobs and jobs > 1:
        parts = Parallel(n_jobs=jobs)(
            delayed(_sweep_cell)(base, k, s, bands, policies, step_duration_s, attr) for k, s in cells
        )
    else:
        parts = [_sweep_cell(base, k, s, bands, policies, step_duration_s, attr) for k, s in cells]
    rows = [row for part in parts for row in part]
    order = {p.name: i for i, p in enumerate(policies)}
    rows.sort(key=lambda r: (r["count"], order[r["policy"]], r["seed"]))
    return rows


def sweep_blockages(counts, policies=None, seeds=range(10), base=None, bands=None,
                    step_duration_s=STEP_DURATION_S, jobs=1) -> list[dict]:
    """Cumulative throughput (bits) for each (count, policy, seed)."""
    return _sweep(counts, policies, seeds, base, bands, step_duration_s, jobs, "cumulative_bits")


def sweep_ber(counts, policies=None, seeds=range(10), base=None, bands=None,
              step_duration_s=STEP_DURATION_S, jobs=1) -> list[dict]:
    """Mean per-step BER for each (count, policy, seed)."""
    return _sweep(counts, policies, seeds, base, bands, step_duration_s, jobs, "mean_ber")


def cell_means(rows: Sequence[dict]) -> dict[tuple, float]:
    """Average ``metric`` over seeds, keyed by ``(count, policy)``."""
    acc: dict[tuple, list] = {}
    for r in rows:
        acc.setdefault((r["count"], r["policy"]), []).append(r["metric"])
    return {k: float(np.mean(v)) for k, v in acc.items()}


def rows_to_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for r in rows:
        writer.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()


# -- predictor training and the gamma sweep ---------------------------------

@dataclass(frozen=True)
class TrainingSetup:
    """Knobs for training the learned predictor on codec-reconstructed frames."""

    scenario: ScenarioConfig = field(default_factory=lambda: ScenarioConfig(num_steps=2000, blocker_crossings=150, seed=1))
    r: int = 5
    r_prime: int = 5
    fractions: tuple = (0.7, 0.2, 0.1)
    step: float = 0.25
    epochs: int = 2000
    learning_rate: float = 0.1
    threshold: float = 0.5


@dataclass(frozen=True, eq=False)
class TrainedPredictor:
    pipeline: Any
    codec: LatentCodec
    latents: np.ndarray
    trace: LinkTrace
    dataset: Any  # SplitDataset over gamma=0 reconstructions

    def test_samples(self, gamma: float, seed: int) -> list[WindowedSample]:
        """The test split rebuilt from frames decoded at ``gamma``."""
        return _resample(self, gamma, seed, self.dataset.test)


def _resample(tp: TrainedPredictor, gamma: float, seed: int, subset) -> list[WindowedSample]:
    if gamma == 0:
        return list(subset)
    codec = LatentCodec(step=tp.codec.step, gamma=gamma, seed=seed)
    codec.prior_, codec.frame_shape_ = tp.codec.prior_, tp.codec.frame_shape_
    frames = codec.inverse_transform(tp.latents)
    r = subset[0].window
    return [
        WindowedSample(frames=frames[s.origin_index - r + 1: s.origin_index + 1],
                       powers=s.powers, label=s.label, origin_index=s.origin_index)
        for s in subset
    ]


def train_predictor(setup: TrainingSetup, seed: int | None = None, trace: LinkTrace | None = None,
                    compressed: bool = True) -> TrainedPredictor:
    """Generate (or take) a trace, pass its frames through the codec at
    gamma=0, window, balance, split and fit the logistic pipeline.

    Frames travel as integer latents and the coded transport is lossless, so
    reconstructions are computed straight from the latents. With
    ``compressed=False`` the raw frames are used instead.
    """
    if seed is None:
        seed = setup.scenario.seed
    if trace is None:
        trace = generate_trace(replace(setup.scenario, seed=seed))
    codec = LatentCodec(step=setup.step).fit(trace.frames)
    latents = codec.transform(trace.frames)
    frames = codec.inverse_transform(latents) if compressed else trace.frames
    samples = window_and_label(trace.with_frames(frames), setup.r, setup.r_prime)
    ds = split(balance(samples, seed), setup.fractions, seed)
    pipe = train_logistic(ds, setup.epochs, setup.learning_rate, setup.threshold)
    return TrainedPredictor(pipeline=pipe, codec=codec, latents=latents, trace=trace, dataset=ds)


GAMMA_FIELDS = ["gamma", "seed", "accuracy"]


def _gamma_seed(setup: TrainingSetup, gammas, seed: int) -> list[dict]:
    tp = train_predictor(setup, seed)
    return [dict(gamma=float(g), seed=seed, accuracy=evaluate(tp.pipeline, tp.test_samples(g, seed)).accuracy)
            for g in gammas]


def gamma_sweep(gammas, setup: TrainingSetup | None = None, seeds=range(10), jobs=1) -> list[dict]:
    """Test accuracy of a predictor trained at gamma=0 and evaluated on test
    windows decoded at each gamma, one row per (gamma, seed)."""
    gammas = list(gammas)
    if not gammas:
        raise ConfigurationError("gamma grid is empty", key="sweep.gammas")
    if len(set(gammas)) != len(gammas):
        raise ConfigurationError("gamma grid has duplicates", key="sweep.gammas")
    for g in gammas:
        if not 0.0 <= g <= MAX_GAMMA:
            raise ConfigurationError(f"gamma {g} outside [0, {MAX_GAMMA}]", key="sweep.gammas")
    setup = setup or TrainingSetup()
    seeds = list(seeds)
    if jobs and jobs > 1:
        parts = Parallel(n_jobs=jobs)(delayed(_gamma_seed)(setup, gammas, s) for s in seeds)
    else:
        parts = [_gamma_seed(setup, gammas, s) for s in seeds]
    rows = [row for part in parts for row in part]
    rows.sort(key=lambda r: (gammas.index(r["gamma"]), r["seed"]))
    return rows


def gamma_means(rows: Sequence[dict]) -> dict[float, float]:
    acc: dict[float, list] = {}
    for r in rows:
        acc.setdefault(r["gamma"], []).append(r["accuracy"])
    return {g: float(np.mean(v)) for g, v in acc.items()}


__all__ = [
    "PolicyConfig",
    "PolicyMode",
    "RunReport",
    "StepMetrics",
    "TrainedPredictor",
    "TrainingSetup",
    "cell_means",
    "default_policies",
    "gamma_means",
    "gamma_sweep",
    "rows_to_csv",
    "run",
    "sweep_ber",
    "sweep_blockages",
    "train_predictor",
]
