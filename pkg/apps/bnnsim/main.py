"""Command-line entry point for the binary-weighted crossbar simulator.

Pipeline Diagram
================
::
    ┌─────────┐    ┌──────────┐    ┌──────────────────┐
    │  train  │───▶│ binarize │───▶│ eval --mode ...  │──▶ eval_report.json
    │ (seed)  │    │          │    │ digital | analog │
    └────┬────┘    └────┬─────┘    └──────────────────┘
         ▼              ▼
    model.json    binary_model.json ───▶ sweep (seed) ──▶ sweep.csv

    cost   ──▶ cost_report.json + text table
    curves ──▶ curves.csv

How to Use
===========
**Step 1 — Inspect the resolved configuration**::
    bnnsim train --config configs/iris.json --seed 7 --print-config

**Step 2 — Run the pipeline**::
    bnnsim train --config configs/iris.json --seed 7
    bnnsim binarize
    bnnsim eval --mode digital
    bnnsim eval --mode analog

**Step 3 — Stress the devices**::
    bnnsim sweep --param p_switch_fail --from 0 --to 0.5 --steps 6 --trials 20 --seed 1

Key Behaviours
===============
- Exit codes: 0 success, 1 usage or configuration, 2 data, 3 analog constraint
  or device, 4 numeric failure.
- ``train`` and ``sweep`` refuse to run without ``--seed``.
- ``--metrics-out`` writes the Prometheus registry in text exposition format.
- ``BNNSIM_DATA_DIR`` locates datasets, ``BNNSIM_OUTPUT_DIR`` anchors relative
  artifact paths.
"""

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from prometheus_client import REGISTRY, write_to_textfile

from apps.bnnsim.commands import COMMANDS
from apps.bnnsim.dependencies import get_run_context
from common.enums import ActivationKind, EvalMode, ExitCode, SweepParameter
from common.exceptions import BnnSimError, UsageError
from services.config.config_service import get_config_service, load_experiment_config

__all__ = ["BnnSimArgumentParser", "build_parser", "main", "run"]

DEFAULT_CURVE_POINTS = 1001


class BnnSimArgumentParser(argparse.ArgumentParser):
    """Routes argparse usage errors through the exit-code scheme."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="Experiment config JSON (defaults when omitted)")
    common.add_argument("--seed", type=int, help="Random seed; required by train and sweep")
    common.add_argument("--out", type=Path, help="Override the artifact path of this command")
    common.add_argument("--quiet", action="store_true", help="Warnings only, no progress bars")
    common.add_argument("--print-config", action="store_true", help="Print the resolved config and exit")
    common.add_argument("--metrics-out", type=Path, help="Write Prometheus metrics to this text file")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = BnnSimArgumentParser(prog="bnnsim", description="Binary-weighted memristive crossbar BNN simulator")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=BnnSimArgumentParser)

    commands.add_parser("train", parents=[common], help="Train a real-valued network")

    binarize = commands.add_parser("binarize", parents=[common], help="Binarize a trained model")
    binarize.add_argument("--model", type=Path, help="Trained model file")
    binarize.add_argument("--binarize-bias", action="store_true", help="Round biases to the weight levels too")
    binarize.add_argument("--fixed-levels", action="store_true", help="Skip the per-layer level scale fit")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a model on the test split")
    evaluate.add_argument("--model", type=Path, help="Binary model (or trained model for digital mode)")
    evaluate.add_argument("--mode", choices=[mode.value for mode in EvalMode], default=EvalMode.DIGITAL.value)
    evaluate.add_argument("--state-out", type=Path, help="Export programmed crossbar state (analog mode)")

    sweep = commands.add_parser("sweep", parents=[common], help="Sweep a device non-ideality")
    sweep.add_argument("--model", type=Path, help="Binary model file")
    sweep.add_argument("--param", choices=[param.value for param in SweepParameter], required=True)
    sweep.add_argument("--from", dest="start", type=float, required=True)
    sweep.add_argument("--to", dest="stop", type=float, required=True)
    sweep.add_argument("--steps", type=int, required=True)
    sweep.add_argument("--trials", type=int, help="Trials per value (config 'trials' when omitted)")
    sweep.add_argument("--workers", type=int, help="Worker processes for independent trials")

    cost = commands.add_parser("cost", parents=[common], help="Estimate power, area and readout latency")
    cost.add_argument("--activation", choices=[kind.value for kind in ActivationKind])
    cost.add_argument("--reference", action="store_true", help="Estimate the two 4x10 sigmoid reference design")

    curves = commands.add_parser("curves", parents=[common], help="Export activation transfer curves")
    curves.add_argument("--points", type=int, default=DEFAULT_CURVE_POINTS)
    curves.add_argument("--step-out", type=Path, help="Also export step responses to this CSV")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse, dispatch, and map failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return ExitCode.USAGE

    ctx = get_run_context(args.command, seed=args.seed, quiet=args.quiet)
    try:
        config = load_experiment_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        if args.print_config:
            print(config.model_dump_json(indent=2))
            return ExitCode.OK
        COMMANDS[args.command](args, config, ctx)
    except BnnSimError as exc:
        ctx.logger.error(f"{exc.category} error: {exc}")
        return exc.exit_code
    except OSError as exc:
        ctx.logger.error(f"data error: {exc}")
        return ExitCode.DATA
    finally:
        if args.metrics_out is not None and ctx.settings.METRICS_ENABLED:
            path = get_config_service().resolve_output(args.metrics_out)
            path.parent.mkdir(parents=True, exist_ok=True)
            write_to_textfile(str(path), REGISTRY)
    ctx.logger.info(f"{args.command} finished in {ctx.get_duration():.2f}s")
    return ExitCode.OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
