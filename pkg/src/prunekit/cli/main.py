"""Command-line entry point.

Exit codes: 0 success, 2 configuration or validation error, 3 runtime
numerical error, 4 infeasible pruning target. Failures also leave a
machine-readable error document in the output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from prunekit.cli import commands
from prunekit.cli.config import load_config
from prunekit.errors import (
    ConfigError,
    DependencyError,
    FormatError,
    InfeasibleTargetError,
    MissingWeightError,
    NonFiniteError,
    PlanMismatchError,
    PrunekitError,
    SchemaError,
    ShapeMismatchError,
    UnknownClassError,
    ValidationError,
)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

_CONFIG_ERRORS = (
    ConfigError, SchemaError, ValidationError, FormatError, UnknownClassError,
    PlanMismatchError, MissingWeightError, ShapeMismatchError, DependencyError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prunekit",
        description="Dependency-aware structured pruning with data-aware retraining.",
    )
    parser.add_argument("--config", required=True, help="path to the run configuration JSON")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--output-dir", default=None, help="override the config output_dir")
    sub = parser.add_subparsers(dest="command", required=True)

    def dashed(value: str) -> str:
        return value.replace("-", "_")

    sub.add_parser("train", help="train (or finetune) a model") \
        .add_argument("--on-subset", action="store_true", help="train on the configured subset only")
    analyze = sub.add_parser("analyze", help="report pruning dependency sets")
    analyze.add_argument("--residual-policy", type=dashed,
                         choices=("tie_group", "skip_final"), default=None)

    prune = sub.add_parser("prune", help="rank, plan, shrink and transfer at one level")
    group = prune.add_mutually_exclusive_group(required=True)
    group.add_argument("--level", type=float, help="target pruning level in [0,100)")
    group.add_argument("--plan", help="apply an existing plan document instead of ranking")
    prune.add_argument("--scope", type=dashed, choices=("global", "per_layer"), default=None)
    prune.add_argument("--residual-policy", type=dashed,
                       choices=("tie_group", "skip_final"), default=None)

    sub.add_parser("search", help="binary-search the best pruning level on the subset")

    sweep = sub.add_parser("sweep", help="evaluate every level on the grid")
    sweep.add_argument("--mode", action="append", type=dashed,
                       choices=("subset_aware", "subset_agnostic", "unpruned"), default=None)
    sweep.add_argument("--levels", nargs="+", type=float, default=None,
                       help="restrict the sweep to these levels")

    div = sub.add_parser("divergence", help="compare the filters selected by prune plans")
    div.add_argument("--plans", nargs="+", required=True, help="plan documents to compare")

    bench = sub.add_parser("bench", help="measure host inference latency")
    bench.add_argument("--batch-size", type=int, default=None)
    bench.add_argument("--repetitions", type=int, default=None)

    report = sub.add_parser("report", help="render pareto summary and figures from sweep CSVs")
    report.add_argument("--sweeps", nargs="+", required=True, help="sweep CSV files")
    report.add_argument("--buckets", type=int, default=None, help="latency buckets for the pareto summary")
    return parser


_COMMANDS = {
    "train": commands.cmd_train,
    "analyze": commands.cmd_analyze,
    "prune": commands.cmd_prune,
    "search": commands.cmd_search,
    "sweep": commands.cmd_sweep,
    "divergence": commands.cmd_divergence,
    "bench": commands.cmd_bench,
    "report": commands.cmd_report,
}


def _emit_error(output_dir: Path | None, stage: str, exc: Exception, config_path: str) -> None:
    doc = {
        "stage": stage,
        "error": type(exc).__name__,
        "message": str(exc),
        "inputs": {"config": config_path},
    }
    try:
        from prunekit.cli.lineage import digest_file

        if Path(config_path).exists():
            doc["inputs"]["config_digest"] = digest_file(config_path)
    except OSError:
        pass
    if output_dir is not None and output_dir.is_dir():
        (output_dir / "error.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(json.dumps(doc), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    output_dir = None
    try:
        overrides = {"seed": args.seed, "output_dir": args.output_dir}
        config = load_config(args.config, overrides)
        output_dir = config.output_dir
        result = _COMMANDS[args.command](config, args)
        print(json.dumps({"command": args.command, **result}, sort_keys=True))
        return 0
    except InfeasibleTargetError as exc:
        _emit_error(output_dir, args.command, exc, args.config)
        return EXIT_INFEASIBLE
    except NonFiniteError as exc:
        _emit_error(output_dir, args.command, exc, args.config)
        return EXIT_NUMERIC
    except _CONFIG_ERRORS as exc:
        _emit_error(output_dir, args.command, exc, args.config)
        return EXIT_CONFIG
    except PrunekitError as exc:
        _emit_error(output_dir, args.command, exc, args.config)
        return EXIT_CONFIG
    except Exception as exc:  # unexpected: keep the traceback for debugging
        traceback.print_exc()
        _emit_error(output_dir, args.command, exc, args.config)
        return 1


if __name__ == "__main__":
    sys.exit(main())
