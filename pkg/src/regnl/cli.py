"""Command-line entry point: ``regnl <subcommand> [options]``.

Settings are resolved in three layers, later ones winning:

1. built-in defaults (:class:`regnl.runner.ExperimentConfig`),
2. the JSON document given with ``--config``,
3. command-line flags.

Exit status is 0 on success, 1 for invalid input or configuration, and 2 when
a fit or training run fails (for example a diverged network).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, arima, baselines, mlp, runner

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid input, so they exit with EXIT_INVALID rather
    than argparse's default of 2 (which here means a failed run)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="seed for initialization, dropout and simulation")
    p.add_argument("--out", help="output directory for all artifacts")
    p.add_argument("--features", choices=("full", "nightlight"),
                   help="input features: nightlight only, or nightlight + coordinates")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="regnl", description="Nowcast regional GDP from nighttime radiance and location.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("build-dataset", help="join radiance, GDP and centroids into dataset.csv")
    _common(p)
    for name in ("radiance", "gdp", "centroids", "deflators"):
        p.add_argument(f"--{name}", help=f"{name} CSV (overrides the config)")
    p.add_argument("--frequency", choices=("quarterly", "annual"))

    p = sub.add_parser("train", help="fit models on the training years")
    _common(p)
    p.add_argument("--model", action="append", choices=runner.MODELS,
                   help="model to train (repeatable; default: the config's models)")
    p.add_argument("--epochs", type=int, help="network training epochs")
    p.add_argument("--learning-rate", type=float, help="network step size")

    p = sub.add_parser("evaluate", help="score one trained model on the test years")
    _common(p)
    p.add_argument("--model", choices=runner.MODELS, default="regnl")

    p = sub.add_parser("compare", help="side-by-side errors and per-period plot tables")
    _common(p)
    p.add_argument("--model", action="append", choices=runner.MODELS,
                   help="model to include (repeatable; default: the config's models)")

    p = sub.add_parser("simulate", help="write synthetic input tables with a known GDP link")
    _common(p)
    p.add_argument("--regions", type=int, dest="n_regions")
    p.add_argument("--periods", type=int, dest="n_periods")
    p.add_argument("--start-year", type=int)
    p.add_argument("--frequency", choices=("quarterly", "annual"))
    p.add_argument("--noise", type=float, help="std of the multiplicative GDP noise")
    p.add_argument("--disruption-period",
                   help="period hit by the disruption, e.g. 2020Q2 or a 0-based index")
    p.add_argument("--severity", type=float, help="factor in (0, 1] applied in that period")
    return parser


def resolve_config(args: argparse.Namespace) -> runner.ExperimentConfig:
    cfg = runner.ExperimentConfig.load(args.config) if args.config else runner.ExperimentConfig()
    overrides = {"seed": args.seed, "out": args.out, "features": args.features}
    for name in ("radiance", "gdp", "centroids", "deflators", "frequency"):
        overrides[name] = getattr(args, name, None)
    if args.command == "train":
        hyper = {"epochs": args.epochs, "learning_rate": args.learning_rate}
        hyper = {k: v for k, v in hyper.items() if v is not None}
        if hyper:
            overrides["mlp"] = {**cfg.mlp, **hyper}
    if args.command == "simulate":
        sim = dict(cfg.simulation)
        for name in ("n_regions", "n_periods", "start_year", "noise", "severity"):
            value = getattr(args, name)
            if value is not None:
                sim[name] = value
        if args.disruption_period is not None:
            label = args.disruption_period
            sim["disruption_period"] = int(label) if label.isdigit() else label
        overrides["simulation"] = sim
    cfg = cfg.with_overrides(**overrides)
    cfg.validate()
    return cfg


def _emit(doc: dict) -> None:
    text = doc.pop("text", None)
    if text is not None:
        print(text, end="")
    else:
        print(json.dumps(doc, indent=2))


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    if args.command == "build-dataset":
        _emit(runner.cmd_build_dataset(cfg))
    elif args.command == "train":
        _emit(runner.cmd_train(cfg, args.model))
    elif args.command == "evaluate":
        _emit(runner.cmd_evaluate(cfg, args.model))
    elif args.command == "compare":
        _emit(runner.cmd_compare(cfg, args.model))
    elif args.command == "simulate":
        paths = runner.cmd_simulate(cfg)
        # A ready-to-use config pointing at the generated tables.
        follow_up = runner.simulated_config(cfg).to_dict()
        config_path = cfg.out_dir / "config.json"
        config_path.write_text(json.dumps(follow_up, indent=2) + "\n", encoding="utf-8")
        _emit({**paths, "config": str(config_path)})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (mlp.TrainingDivergedError, arima.FitFailedError,
            baselines.DegenerateSystemError) as exc:
        print(f"regnl {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ValueError, FileNotFoundError) as exc:
        print(f"regnl {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"regnl {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
