"""Command-line experiment runner.

    dualband simulate   --config cfg.txt --out runs/
    dualband train      --out model/
    dualband codec-eval --out codec/
    dualband sweep      --jobs 4 --out sweep/

Exit codes: 0 ok, 2 configuration error (the offending key is printed),
3 file or trace-format error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._io import atomic_write
from .codec import bandwidth_reduction, encode_symbols, fit_frames_prior, raw_bits, rd_report
from .config import ExperimentConfig
from .errors import ConfigurationError, DualBandError, ParseError
from .predictor import ConfusionPredictor, OraclePredictor, evaluate
from .scene import LinkTrace, blockage_runs, export_trace, generate_trace, import_trace
from .simulator import (
    SWEEP_FIELDS,
    PolicyConfig,
    PolicyMode,
    cell_means,
    gamma_means,
    gamma_sweep,
    rows_to_csv,
    run,
    sweep_ber,
    sweep_blockages,
    train_predictor,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _load_trace(cfg: ExperimentConfig) -> LinkTrace:
    path = cfg["scenario.trace"]
    if path:
        return import_trace(path)
    return generate_trace(cfg.scenario())


def _predictor(cfg: ExperimentConfig):
    """``(predictor, prior or None)`` for the configured predictor kind."""
    kind = cfg["policy.predictor"]
    if kind == "oracle":
        return OraclePredictor(), None
    if kind == "confusion":
        return ConfusionPredictor(cfg["confusion.tpr"], cfg["confusion.tnr"], cfg["confusion.seed"]), None
    tp = train_predictor(cfg.training_setup())
    return tp.pipeline, tp.codec.prior_


def _policies(cfg: ExperimentConfig, predictor) -> list[PolicyConfig]:
    modes = {m.value: m for m in PolicyMode}
    out = []
    for name in cfg["policy.set"]:
        mode = modes[name]
        out.append(PolicyConfig(
            mode,
            predictor=predictor if mode is PolicyMode.SWITCHING else None,
            gamma=cfg["codec.gamma"],
            lam=cfg["codec.lambda"],
            window=cfg["dataset.r"],
            horizon=cfg["policy.horizon"],
            seed=cfg["dataset.seed"],
        ))
    return out


def cmd_simulate(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    trace = _load_trace(cfg)
    predictor, prior = _predictor(cfg)
    if prior is None and "switching" in cfg["policy.set"]:
        prior = fit_frames_prior(trace.frames, cfg["codec.step"], cfg["codec.scale_floor"])
    bands = cfg.bands()
    summaries = {}
    files = {}
    for policy in _policies(cfg, predictor):
        report = run(trace, bands, policy, prior=prior, step_duration_s=cfg["policy.step_duration_s"],
                     distance_m=cfg["scenario.distance_m"])
        files[f"run_{policy.name}.csv"] = report.to_csv()
        files[f"run_{policy.name}.json"] = report.to_json()
        summaries[policy.name] = report.summary()
    switching = summaries.get("switching", {})
    summary = dict(
        predictor=cfg["policy.predictor"],
        accuracy=switching.get("accuracy"),
        bandwidth_reduction=switching.get("bandwidth_reduction"),
        cumulative_bits={k: s["cumulative_bits"] for k, s in summaries.items()},
        policies=summaries,
        trace=dict(num_steps=len(trace), blocked_steps=int(trace.blocked.sum()),
                   blockages=len(blockage_runs(trace.blocked))),
    )
    export_trace(trace, out / "trace.dbtr")
    for name, text in files.items():
        atomic_write(out / name, text)
    atomic_write(out / "summary.json", _dump_json(summary))
    return EXIT_OK


def _split_metrics(pipe, ds) -> dict:
    out = {}
    for name in ("train", "val", "test"):
        subset = getattr(ds, name)
        if subset:
            m = evaluate(pipe, subset)
            out[name] = dict(accuracy=m.accuracy, tpr=m.tpr, tnr=m.tnr, cross_entropy=m.cross_entropy, n=m.n)
    return out


def cmd_train(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    setup = cfg.training_setup()
    compressed = train_predictor(setup)
    raw = train_predictor(setup, trace=compressed.trace, compressed=False)
    pipe = compressed.pipeline
    features, scaler, logistic = pipe[0], pipe[1], pipe[2]
    preprocess = dict(
        window=int(features.window_),
        power_mean=features.power_mean_.tolist(),
        power_std=features.power_std_.tolist(),
        scaler_mean=scaler.mean_.tolist(),
        scaler_scale=scaler.scale_.tolist(),
    )
    lines = ["epoch,loss_raw,loss_compressed"]
    for epoch, (lr, lc) in enumerate(zip(raw.pipeline[-1].loss_curve_, logistic.loss_curve_)):
        lines.append(f"{epoch},{lr!r},{lc!r}")
    # mean coded size of (up to) the first 50 training frames under the fitted prior
    bits = [encode_symbols(z, compressed.codec.prior_)[1] for z in compressed.latents[:50]]
    ratio = float(np.mean(bits)) / raw_bits(compressed.trace.frames.shape[1:])
    metrics = dict(
        compressed=_split_metrics(pipe, compressed.dataset),
        raw=_split_metrics(raw.pipeline, raw.dataset),
        compression_ratio=ratio,
        bandwidth_reduction=bandwidth_reduction(ratio),
    )
    atomic_write(out / "model.txt", logistic.model_.to_text())
    atomic_write(out / "preprocess.json", _dump_json(preprocess))
    atomic_write(out / "loss_curve.csv", "\n".join(lines) + "\n")
    atomic_write(out / "metrics.json", _dump_json(metrics))
    return EXIT_OK


CODEC_FIELDS = ["lambda", "gamma", "step", "rate_bits", "distortion_mse", "objective",
                "compression_ratio", "bandwidth_reduction"]


def cmd_codec_eval(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    trace = _load_trace(cfg)
    frames = trace.frames[: cfg["codec_eval.frames"]]
    seed = cfg["dataset.seed"]
    points = {}
    for step in cfg["codec_eval.steps"]:
        prior = fit_frames_prior(trace.frames, step, cfg["codec.scale_floor"])
        for gamma in cfg["codec_eval.gammas"]:
            reports = [rd_report(f, prior, gamma, 0.0, seed=(seed, i)) for i, f in enumerate(frames)]
            points[(gamma, step)] = (
                float(np.mean([r.rate_bits for r in reports])),
                float(np.mean([r.distortion_mse for r in reports])),
                float(np.mean([r.compression_ratio for r in reports])),
            )
    rows = []
    for lam in cfg["codec_eval.lambdas"]:
        for gamma in cfg["codec_eval.gammas"]:
            for step in cfg["codec_eval.steps"]:
                rate, mse, ratio = points[(gamma, step)]
                rows.append({"lambda": float(lam), "gamma": float(gamma), "step": float(step),
                             "rate_bits": rate, "distortion_mse": mse, "objective": mse + lam * rate,
                             "compression_ratio": ratio, "bandwidth_reduction": bandwidth_reduction(ratio)})
    atomic_write(out / "codec_eval.csv", rows_to_csv(rows, CODEC_FIELDS))
    atomic_write(out / "codec_eval.json", _dump_json(rows))
    return EXIT_OK


def _means_csv(rows) -> str:
    means = cell_means(rows)
    lines = ["count,policy,mean"]
    lines += [f"{k},{p},{m!r}" for (k, p), m in means.items()]
    return "\n".join(lines) + "\n"


def cmd_sweep(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> int:
    predictor, _ = _predictor(cfg)
    policies = _policies(cfg, predictor)
    base = cfg.scenario()
    seeds = range(base.seed, base.seed + cfg["sweep.seeds"])
    kwargs = dict(policies=policies, seeds=seeds, base=base, bands=cfg.bands(),
                  step_duration_s=cfg["policy.step_duration_s"], jobs=jobs)
    thr = sweep_blockages(cfg["sweep.counts"], **kwargs)
    ber = sweep_ber(cfg["sweep.counts"], **kwargs)
    files = {
        "sweep_throughput.csv": rows_to_csv(thr, SWEEP_FIELDS),
        "sweep_throughput_means.csv": _means_csv(thr),
        "sweep_ber.csv": rows_to_csv(ber, SWEEP_FIELDS),
        "sweep_ber_means.csv": _means_csv(ber),
        "sweep.json": _dump_json(dict(throughput=thr, ber=ber)),
    }
    if cfg["sweep.gammas"]:
        setup = cfg.training_setup()
        gseeds = range(setup.scenario.seed, setup.scenario.seed + cfg["sweep.gamma_seeds"])
        grows = gamma_sweep(cfg["sweep.gammas"], setup, gseeds, jobs=jobs)
        lines = ["gamma,mean_accuracy"] + [f"{g!r},{a!r}" for g, a in gamma_means(grows).items()]
        files["gamma_sweep.csv"] = rows_to_csv(grows, ["gamma", "seed", "accuracy"])
        files["gamma_sweep_means.csv"] = "\n".join(lines) + "\n"
        files["gamma_sweep.json"] = _dump_json(grows)
    for name, text in files.items():
        atomic_write(out / name, text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "codec-eval": cmd_codec_eval,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file (defaults apply to missing keys)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="override scenario.seed, dataset.seed and train.seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser = argparse.ArgumentParser(prog="dualband", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="generate a trace and run every policy on it")
    sub.add_parser("train", parents=[common], help="train the logistic predictor on raw and compressed frames")
    sub.add_parser("codec-eval", parents=[common], help="rate/distortion table over (lambda, gamma, step)")
    sub.add_parser("sweep", parents=[common], help="throughput and BER versus blockage count, optional gamma sweep")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = ExperimentConfig.load(args.config)
        else:
            cfg = ExperimentConfig.from_overrides({})
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1", key="--jobs")
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        status = COMMANDS[args.command](cfg, out, args.jobs)
        atomic_write(out / "config.txt", cfg.to_text())
        return status
    except ConfigurationError as exc:
        print(f"dualband: configuration error at {exc.key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ParseError) as exc:
        print(f"dualband: {exc}", file=sys.stderr)
        return EXIT_IO
    except DualBandError as exc:
        print(f"dualband: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
