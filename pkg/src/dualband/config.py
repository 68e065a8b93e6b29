"""Flat ``key = value`` experiment configuration with dotted keys.

Every accepted key has a default below; a config file only lists overrides.
Lines starting with ``#`` are comments. Tuples are comma-separated.
:meth:`ExperimentConfig.to_text` writes the effective configuration, which
parses back to an equal config.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .channel import BandConfig
from .errors import ConfigurationError
from .scene import ScenarioConfig

POLICY_NAMES = ("mmwave", "sub6", "switching")
PREDICTOR_NAMES = ("oracle", "confusion", "logistic")

# key -> (kind, default); kinds: int, float, str, ints, floats, strs
SCHEMA: dict[str, tuple[str, object]] = {
    "scenario.num_steps": ("int", 100),
    "scenario.distance_m": ("float", 10.6),
    "scenario.blocker_crossings": ("int", 30),
    "scenario.blocker_speed": ("int", 5),
    "scenario.frame_dims": ("ints", (32, 16, 3)),
    "scenario.seed": ("int", 0),
    "scenario.blocked_power_drop_db": ("float", 20.0),
    "scenario.trace": ("str", ""),
    "dataset.r": ("int", 5),
    "dataset.r_prime": ("int", 5),
    "dataset.fractions": ("floats", (0.7, 0.2, 0.1)),
    "dataset.seed": ("int", 0),
    "codec.lambda": ("float", 0.0),
    "codec.gamma": ("float", 0.0),
    "codec.step": ("float", 0.25),
    "codec.scale_floor": ("float", 1e-3),
    "policy.set": ("strs", POLICY_NAMES),
    "policy.predictor": ("str", "oracle"),
    "policy.horizon": ("int", 1),
    "policy.step_duration_s": ("float", 1.0 / 6.5),
    "confusion.tpr": ("float", 0.9278),
    "confusion.tnr": ("float", 0.9278),
    "confusion.seed": ("int", 0),
    "train.num_steps": ("int", 2000),
    "train.blocker_crossings": ("int", 150),
    "train.seed": ("int", 1),
    "train.epochs": ("int", 2000),
    "train.learning_rate": ("float", 0.1),
    "train.threshold": ("float", 0.5),
    "codec_eval.frames": ("int", 20),
    "codec_eval.lambdas": ("floats", (0.0, 1e-6, 1e-5)),
    "codec_eval.gammas": ("floats", (0.0, 0.5, 1.0)),
    "codec_eval.steps": ("floats", (0.0625, 0.125, 0.25, 0.5)),
    "sweep.counts": ("ints", (5, 10, 15, 20, 25, 30)),
    "sweep.seeds": ("int", 10),
    "sweep.gammas": ("floats", ()),
    "sweep.gamma_seeds": ("int", 10),
}

_BAND_FIELDS = ("carrier_hz", "bandwidth_hz", "tx_power_dbm", "noise_power_dbm",
                "nlos_extra_loss_db", "antenna_gain_db")
for _name, _factory in (("mmwave", BandConfig.mmwave), ("sub6", BandConfig.sub6)):
    _band = _factory()
    for _f in _BAND_FIELDS:
        SCHEMA[f"band.{_name}.{_f}"] = ("float", getattr(_band, _f))


def _parse_value(key: str, raw: str):
    kind, _ = SCHEMA[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "str":
            return raw
        items = [p.strip() for p in raw.split(",") if p.strip()]
        if kind == "ints":
            return tuple(int(p) for p in items)
        if kind == "floats":
            return tuple(float(p) for p in items)
        return tuple(items)
    except ValueError:
        raise ConfigurationError(f"cannot parse {raw!r} as {kind}", key=key) from None


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind in ("ints", "floats", "strs"):
        return ",".join(repr(float(v)) if kind == "floats" else str(v) for v in value)
    return str(value)


def parse_text(text: str) -> dict:
    """Overrides from config text; unknown keys and malformed lines are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigurationError(f"line {lineno}: expected key = value", key=key or f"line {lineno}")
        if key not in SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown key", key=key)
        out[key] = _parse_value(key, value)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    @classmethod
    def from_overrides(cls, overrides: dict) -> "ExperimentConfig":
        values = {k: d for k, (_, d) in SCHEMA.items()}
        for k, v in overrides.items():
            if k not in SCHEMA:
                raise ConfigurationError("unknown key", key=k)
            values[k] = v
        cfg = cls(values)
        cfg.validate()
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        return cls.from_overrides(parse_text(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Override every seed key with ``seed``."""
        values = dict(self.values)
        for k in ("scenario.seed", "dataset.seed", "train.seed"):
            values[k] = int(seed)
        return ExperimentConfig.from_overrides(values)

    def __getitem__(self, key):
        return self.values[key]

    def to_text(self) -> str:
        lines = [f"{k} = {_format_value(SCHEMA[k][0], self.values[k])}" for k in sorted(SCHEMA)]
        return "\n".join(lines) + "\n"

    # -- typed views --------------------------------------------------------

    def scenario(self) -> ScenarioConfig:
        v = self.values
        return ScenarioConfig(
            num_steps=v["scenario.num_steps"],
            distance_m=v["scenario.distance_m"],
            blocker_crossings=v["scenario.blocker_crossings"],
            blocker_speed=v["scenario.blocker_speed"],
            frame_dims=tuple(v["scenario.frame_dims"]),
            seed=v["scenario.seed"],
            blocked_power_drop_db=v["scenario.blocked_power_drop_db"],
        )

    def training_scenario(self) -> ScenarioConfig:
        v = self.values
        base = self.scenario()
        try:
            return ScenarioConfig(
                num_steps=v["train.num_steps"],
                distance_m=base.distance_m,
                blocker_crossings=v["train.blocker_crossings"],
                blocker_speed=base.blocker_speed,
                frame_dims=base.frame_dims,
                seed=v["train.seed"],
                blocked_power_drop_db=base.blocked_power_drop_db,
            )
        except ConfigurationError as exc:
            key = (exc.key or "").replace("scenario.", "train.")
            raise ConfigurationError(str(exc), key=key) from None

    def bands(self) -> tuple[BandConfig, BandConfig]:
        out = []
        for name, factory in (("mmwave", BandConfig.mmwave), ("sub6", BandConfig.sub6)):
            params = {f: self.values[f"band.{name}.{f}"] for f in _BAND_FIELDS}
            try:
                out.append(factory(**params))
            except ConfigurationError as exc:
                raise ConfigurationError(str(exc), key=f"band.{name}.{exc.key}") from None
        return tuple(out)

    def training_setup(self):
        from .simulator import TrainingSetup

        v = self.values
        return TrainingSetup(
            scenario=self.training_scenario(),
            r=v["dataset.r"],
            r_prime=v["dataset.r_prime"],
            fractions=tuple(v["dataset.fractions"]),
            step=v["codec.step"],
            epochs=v["train.epochs"],
            learning_rate=v["train.learning_rate"],
            threshold=v["train.threshold"],
        )

    def validate(self) -> None:
        v = self.values
        self.scenario()
        self.training_scenario()
        self.bands()
        if v["dataset.r"] < 1:
            raise ConfigurationError("r must be >= 1", key="dataset.r")
        if v["dataset.r_prime"] < 1:
            raise ConfigurationError("r_prime must be >= 1", key="dataset.r_prime")
        fr = v["dataset.fractions"]
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigurationError("fractions must be three positive numbers summing to 1", key="dataset.fractions")
        if not 0.0 <= v["codec.gamma"] <= 1.5:
            raise ConfigurationError("gamma must lie in [0, 1.5]", key="codec.gamma")
        if v["codec.lambda"] < 0:
            raise ConfigurationError("lambda must be >= 0", key="codec.lambda")
        for key in ("codec.step", "codec.scale_floor", "policy.step_duration_s", "train.learning_rate"):
            if not v[key] > 0:
                raise ConfigurationError("must be > 0", key=key)
        for name in v["policy.set"]:
            if name not in POLICY_NAMES:
                raise ConfigurationError(f"unknown policy {name!r}; choose from {POLICY_NAMES}", key="policy.set")
        if not v["policy.set"]:
            raise ConfigurationError("policy set is empty", key="policy.set")
        if len(set(v["policy.set"])) != len(v["policy.set"]):
            raise ConfigurationError("policy set has duplicates", key="policy.set")
        if v["policy.predictor"] not in PREDICTOR_NAMES:
            raise ConfigurationError(f"choose from {PREDICTOR_NAMES}", key="policy.predictor")
        if v["policy.horizon"] < 1:
            raise ConfigurationError("horizon must be >= 1", key="policy.horizon")
        for key in ("confusion.tpr", "confusion.tnr"):
            if not 0.0 <= v[key] <= 1.0:
                raise ConfigurationError("rate must lie in [0, 1]", key=key)
        if v["train.epochs"] < 0:
            raise ConfigurationError("epochs must be >= 0", key="train.epochs")
        if not 0.0 < v["train.threshold"] < 1.0:
            raise ConfigurationError("threshold must lie in (0, 1)", key="train.threshold")
        if v["codec_eval.frames"] < 1:
            raise ConfigurationError("need at least one frame", key="codec_eval.frames")
        if any(x < 0 for x in v["codec_eval.lambdas"]) or not v["codec_eval.lambdas"]:
            raise ConfigurationError("lambdas must be non-empty and >= 0", key="codec_eval.lambdas")
        for key in ("codec_eval.gammas", "sweep.gammas"):
            if any(not 0.0 <= g <= 1.5 for g in v[key]):
                raise ConfigurationError("gammas must lie in [0, 1.5]", key=key)
        if not v["codec_eval.gammas"]:
            raise ConfigurationError("gamma grid is empty", key="codec_eval.gammas")
        if not v["codec_eval.steps"] or any(s <= 0 for s in v["codec_eval.steps"]):
            raise ConfigurationError("steps must be non-empty and > 0", key="codec_eval.steps")
        if not v["sweep.counts"] or any(k < 0 for k in v["sweep.counts"]):
            raise ConfigurationError("counts must be non-empty and >= 0", key="sweep.counts")
        for key in ("sweep.seeds", "sweep.gamma_seeds"):
            if v[key] < 1:
                raise ConfigurationError("need at least one seed", key=key)
