"""Command-line interface.

    robust-loss-lab <subcommand> [--config <path>] [flags]

Subcommands: check-symmetry, verify-risk-identity, robustness-muh,
sweep-alpha, demo-mitigation. Config files are JSON objects mirroring
the experiment config field names; flags override file values. With
--out <dir> each command writes report.json plus one CSV per table.
Exit codes: 0 pass, 1 assertion failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as exp
from .errors import ConfigError, CsvParseError, DegenerateProblemError, DivergenceError

ZOO = "muh,mae,gce:q=0.7,sce:lambda=1.0,softmax_ce,square_star"

DEFAULTS = {
    "robustness-muh": {
        "data": {"synthetic": {"n_classes": 3, "dim": 3, "n_per_class": 100, "sigma": 1.0, "center_scale": 3.0}},
        "loss": "muh",
        "regularizer": "quad:scale=0.5",
        "rho": 0.4,
        "seeds": [0, 1, 2, 3, 4],
        "train": {"max_iters": 20000, "grad_tol": 1e-10},
        "model": {"family": "linear", "feature_map": "append_one", "hidden": 16},
    },
    "sweep-alpha": {
        "data": {"synthetic": {"n_classes": 3, "dim": 3, "n_per_class": 100, "sigma": 1.0, "center_scale": 3.0}},
        "loss": "softmax_ce",
        "regularizer": "quad:scale=0.5",
        "rho": 0.3,
        "alpha_schedule": {"alpha0": 1.0, "ratio": 0.3, "count": 7},
        "seeds": [0, 1, 2],
        "train": {"max_iters": 20000, "grad_tol": 1e-9},
        "model": {"family": "linear", "feature_map": "append_one", "hidden": 16},
    },
    "demo-mitigation": {
        "data": {"synthetic": {"n_classes": 3, "dim": 3, "n_per_class": 50, "sigma": 0.7, "center_scale": 3.0}},
        "loss": "softmax_ce",
        "rho": 0.4,
        "seeds": list(range(10)),
        "train": {"max_iters": 4000, "grad_tol": 1e-6},
        "model": {"family": "linear", "feature_map": "append_one", "hidden": 16},
        "lambda_grid": [0.0, 1.0, 10.0, 100.0],
        "penalties": ["entropy", "label_smoothing"],
        "n_test_per_class": 200,
    },
}


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _experiment_config(command: str, args) -> exp.ExperimentConfig:
    cfg = DEFAULTS[command]
    if args.config:
        cfg = _merge(cfg, exp.load_config_file(args.config))
    overrides: dict = {}
    if getattr(args, "rho", None) is not None:
        overrides["rho"] = args.rho
    if getattr(args, "seeds", None):
        overrides["seeds"] = [int(s) for s in _split(args.seeds)]
    if getattr(args, "loss", None):
        overrides["loss"] = args.loss
    if getattr(args, "regularizer", None):
        overrides["regularizer"] = args.regularizer
    if getattr(args, "family", None):
        overrides["model"] = {"family": args.family}
    if getattr(args, "alpha0", None) is not None or getattr(args, "ratio", None) is not None or getattr(args, "count", None) is not None:
        sched = {}
        if args.alpha0 is not None:
            sched["alpha0"] = args.alpha0
        if args.ratio is not None:
            sched["ratio"] = args.ratio
        if args.count is not None:
            sched["count"] = args.count
        overrides["alpha_schedule"] = sched
    if getattr(args, "lambdas", None):
        overrides["lambda_grid"] = [float(v) for v in _split(args.lambdas)]
    if getattr(args, "penalties", None):
        overrides["penalties"] = _split(args.penalties)
    return exp.config_from_dict(_merge(cfg, overrides))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-loss-lab", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", help="directory for report.json and per-table CSVs")
        p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("check-symmetry", help="label-sum constancy for each loss")
    add_common(p)
    p.add_argument("--losses", default=ZOO, help="comma-separated loss specs")
    p.add_argument("--c", type=int, default=3, help="class count")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify-risk-identity", help="noisy-risk decomposition residuals over a grid")
    add_common(p)
    p.add_argument("--losses", default=ZOO)
    p.add_argument("--rhos", default="0.1,0.3")
    p.add_argument("--cs", default="2,3,5")
    p.add_argument("--models", type=int, default=5)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("robustness-muh", help="clean-vs-noisy agreement with closed-form oracles")
    add_common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--seeds", help="comma-separated run seeds")
    p.add_argument("--loss", choices=["muh", "square_star"])
    p.add_argument("--regularizer")
    p.add_argument("--family", choices=["linear", "mlp2"])

    p = sub.add_parser("sweep-alpha", help="loss-weight sweep against the robust reference loss")
    add_common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--seeds")
    p.add_argument("--loss")
    p.add_argument("--regularizer")
    p.add_argument("--family", choices=["linear", "mlp2"])
    p.add_argument("--alpha0", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--count", type=int)

    p = sub.add_parser("demo-mitigation", help="clean-test accuracy vs confidence-penalty coefficient")
    add_common(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--seeds")
    p.add_argument("--lambdas", help="comma-separated penalty coefficients")
    p.add_argument("--penalties", help="comma-separated penalty names")

    return parser


def _dispatch(args) -> exp.Report:
    if args.command == "check-symmetry":
        return exp.run_check_symmetry(
            _split(args.losses), n_classes=args.c, trials=args.trials, tol=args.tol, seed=args.seed
        )
    if args.command == "verify-risk-identity":
        return exp.run_risk_identity(
            loss_names=_split(args.losses),
            rhos=[float(v) for v in _split(args.rhos)],
            class_counts=[int(v) for v in _split(args.cs)],
            n_models=args.models,
            n_samples=args.samples,
            tol=args.tol,
            seed=args.seed,
        )
    if args.command == "robustness-muh":
        return exp.run_robustness(_experiment_config("robustness-muh", args))
    if args.command == "sweep-alpha":
        return exp.run_alpha_sweep(_experiment_config("sweep-alpha", args))
    if args.command == "demo-mitigation":
        return exp.run_mitigation(_experiment_config("demo-mitigation", args))
    raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = _dispatch(args)
    except (ConfigError, CsvParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateProblemError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(exp.format_report(report))
    if args.out:
        exp.write_report(report, args.out)
        print(f"wrote {Path(args.out) / 'report.json'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
