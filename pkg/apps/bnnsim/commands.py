"""Subcommand implementations for the ``bnnsim`` CLI.

Each command resolves its inputs from the experiment config and the flags,
writes one artifact, and prints a one-line summary to stdout. Every artifact
embeds the resolved experiment config, seed included.
"""

import argparse
import json
from collections.abc import Callable
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from apps.bnnsim.dependencies import RunContext
from common.enums import ActivationKind, EvalMode, SweepParameter
from common.exceptions import ConfigurationError, DataFormatError, UsageError
from common.models import BinaryModel, TrainedModel
from common.schemas import ExperimentConfig
from services.analog_transfer.analog_transfer_service import (
    CURVE_HEADER,
    STEP_HEADER,
    export_curves,
    export_step_response,
    write_csv,
)
from services.binarizer.binarizer_service import (
    binarize_model,
    decode_model,
    derive_levels,
    load_binary_model,
    save_binary_model,
)
from services.config.config_service import get_config_service
from services.cost_model.cost_model_service import estimate, reference_estimate, render_table, to_document
from services.dataio.dataio_service import LoadedData, load_experiment_data
from services.evaluation.evaluation_service import EvaluationService, count_inversions, summarize_sweep, write_sweep_csv
from services.mlp.mlp_service import accuracy, load_model, save_model, train

__all__ = ["COMMANDS", "cmd_binarize", "cmd_cost", "cmd_curves", "cmd_eval", "cmd_sweep", "cmd_train"]

CommandFn = Callable[[argparse.Namespace, ExperimentConfig, RunContext], Path]


# ============================================================================
# HELPERS
# ============================================================================


def _require_seed(args: argparse.Namespace) -> int:
    if args.seed is None:
        raise UsageError(f"'{args.command}' requires an explicit --seed")
    return args.seed


def _output(args: argparse.Namespace, default: Path) -> Path:
    return get_config_service().resolve_output(args.out or default)


def _input(path: Path | None, default: Path) -> Path:
    return get_config_service().resolve_output(path or default)


def _write_json(path: Path, document: BaseModel) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document.model_dump_json(indent=2), encoding="utf-8")
    return path


def _resolve_experiment(
    args: argparse.Namespace, config: ExperimentConfig, embedded: ExperimentConfig | None
) -> ExperimentConfig:
    """An explicit --config wins; otherwise the config embedded in the input artifact."""
    if args.config is None and embedded is not None:
        return embedded
    if embedded is not None:
        return config.with_seed(embedded.network.seed)
    return config


def _load_data(experiment: ExperimentConfig, ctx: RunContext) -> LoadedData:
    data = load_experiment_data(
        experiment.dataset, seed=experiment.network.seed, data_dir=ctx.settings.BNNSIM_DATA_DIR
    )
    ctx.logger.info(f"Dataset: {data.description}")
    return data


def _load_any_model(path: Path) -> tuple[TrainedModel | BinaryModel, ExperimentConfig | None]:
    """Load a trained or binary model file, told apart by its ``layers`` key."""
    if not path.is_file():
        raise DataFormatError("Model file not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"Model file is not valid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    if isinstance(payload, dict) and "layers" in payload:
        binary, document = load_binary_model(path)
        return binary, document.experiment
    model, document = load_model(path)
    return model, document.experiment


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_train(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    seed = _require_seed(args)
    experiment = config.with_seed(seed)
    data = _load_data(experiment, ctx)
    network = experiment.network
    if data.train.n_features != network.input_size:
        raise ConfigurationError(
            f"Network input size {network.input_size} does not match {data.train.n_features} dataset features"
        )
    if data.train.n_classes > network.n_classes:
        raise ConfigurationError(f"Network has {network.n_classes} outputs for {data.train.n_classes} classes")
    model = train(network, data.train, log=ctx.logger, progress=ctx.progress_enabled)
    out = save_model(_output(args, experiment.outputs.model), model, experiment)
    final_loss = model.training_loss_history[-1]
    print(
        f"train: wrote {out} (seed={seed}, final_loss={final_loss:.6f}, "
        f"train_acc={accuracy(model, data.train):.4f}, test_acc={accuracy(model, data.test):.4f})"
    )
    return out


def cmd_binarize(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    model, document = load_model(_input(args.model, config.outputs.model))
    experiment = _resolve_experiment(args, config, document.experiment)
    binarize_bias = args.binarize_bias or experiment.binarize_bias
    fit_level_scale = experiment.fit_level_scale and not args.fixed_levels
    experiment = experiment.model_copy(update={"binarize_bias": binarize_bias, "fit_level_scale": fit_level_scale})
    levels = derive_levels(experiment.device.r_on, experiment.device.r_off)
    binary = binarize_model(model, levels, binarize_bias=binarize_bias, fit_level_scale=fit_level_scale, log=ctx.logger)
    out = save_binary_model(_output(args, experiment.outputs.binary_model), binary, experiment)
    high = np.mean(np.concatenate([layer.is_high.ravel() for layer in binary.layers]))
    scales = ",".join(f"{layer.level_set.w_high:.4g}" for layer in binary.layers)
    print(
        f"binarize: wrote {out} (w_low/w_high={levels.w_low:.6f}, layer_scales=[{scales}], "
        f"high_cells={high:.4f}, binarize_bias={binarize_bias})"
    )
    return out


def cmd_eval(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    model, embedded = _load_any_model(_input(args.model, config.outputs.binary_model))
    experiment = _resolve_experiment(args, config, embedded)
    data = _load_data(experiment, ctx)
    service = EvaluationService.from_context(ctx)
    mode = EvalMode(args.mode)
    if mode == EvalMode.DIGITAL:
        is_binary = isinstance(model, BinaryModel)
        report = service.evaluate_digital(
            decode_model(model) if is_binary else model,
            data.test,
            binarize_bias=model.binarize_bias if is_binary else False,
            split=data.description,
            experiment=experiment,
        )
    else:
        if not isinstance(model, BinaryModel):
            raise UsageError("Analog evaluation needs a binary model; run 'binarize' first")
        seed = args.seed if args.seed is not None else experiment.network.seed
        state_path = args.state_out or experiment.outputs.crossbar_state
        report = service.evaluate_analog(
            model,
            data.test,
            experiment,
            seed=seed,
            split=data.description,
            state_path=get_config_service().resolve_output(state_path) if state_path is not None else None,
        )
    out = _write_json(_output(args, experiment.outputs.eval_report), report)
    print(f"eval: {mode.value} accuracy {report.accuracy:.4f} on {report.n_samples} samples, wrote {out}")
    return out


def _sweep_values(start: float, stop: float, steps: int) -> list[float]:
    if steps < 1:
        raise UsageError(f"--steps must be >= 1, got {steps}")
    return [round(float(value), 12) for value in np.linspace(start, stop, steps)]


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    seed = _require_seed(args)
    binary, document = load_binary_model(_input(args.model, config.outputs.binary_model))
    experiment = _resolve_experiment(args, config, document.experiment)
    data = _load_data(experiment, ctx)
    trials = args.trials or experiment.trials
    workers = args.workers or experiment.sweep_workers or ctx.settings.SWEEP_WORKERS
    parameter = SweepParameter(args.param)
    rows = EvaluationService.from_context(ctx).run_sweep(
        binary,
        data.test,
        experiment,
        parameter,
        _sweep_values(args.start, args.stop, args.steps),
        trials=trials,
        base_seed=seed,
        workers=workers,
    )
    out = _output(args, experiment.outputs.sweep_csv)
    write_sweep_csv(rows, out)
    inversions, significant = count_inversions(summarize_sweep(rows))
    print(
        f"sweep: {len(rows)} rows over {parameter.value}, wrote {out} "
        f"(inversions={inversions}, beyond_stderr={significant})"
    )
    return out


def cmd_cost(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    policy = config.cost_policy
    if args.reference:
        report = reference_estimate(policy)
    else:
        activation = ActivationKind(args.activation) if args.activation else None
        report = estimate(config.network, activation, policy)
    ctx.logger.info(f"Cost composition: {report.composition_rule}")
    out = _write_json(_output(args, config.outputs.cost_report), to_document(report, config))
    print(render_table(report))
    print(f"cost: wrote {out}")
    return out


def cmd_curves(args: argparse.Namespace, config: ExperimentConfig, ctx: RunContext) -> Path:
    out = _output(args, config.outputs.curves_csv)
    write_csv(export_curves(config.transfer, args.points), CURVE_HEADER, out)
    if args.step_out is not None:
        step_path = get_config_service().resolve_output(args.step_out)
        write_csv(export_step_response(config.transfer, args.points), STEP_HEADER, step_path)
        ctx.logger.info(f"Step response written to {step_path}")
    print(f"curves: {args.points} points, wrote {out}")
    return out


COMMANDS: dict[str, CommandFn] = {
    "train": cmd_train,
    "binarize": cmd_binarize,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "cost": cmd_cost,
    "curves": cmd_curves,
}
