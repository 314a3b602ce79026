"""Accuracy evaluation and device fault sweeps.

Evaluation Paths
================
::
    digital:  TrainedModel (float or decoded binary) ──▶ mlp forward ──▶ argmax
    analog:   BinaryModel ──▶ program crossbars ──▶ analog forward ──▶ argmax

    sweep:    for trial in 0..T−1, seed = base_seed + trial
                for value in values
                  device[parameter] = value ──▶ analog accuracy ──▶ SweepRow

Sweep trials are independent: each builds its own seeded crossbars, so they
run in a process pool when more than one worker is configured. Rows are
sorted by ``(trial, value)`` before they are returned, so output never
depends on completion order.
"""

import csv
import io
import logging
import math
from collections import defaultdict
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from itertools import pairwise
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from prometheus_client import Counter
from pydantic import ValidationError
from tqdm import tqdm

from common.enums import EvalMode, SweepParameter
from common.exceptions import ConfigurationError
from common.models import BinaryModel, Dataset, TrainedModel
from common.schemas import AccuracyReport, DeviceModel, ExperimentConfig, SweepRow, SweepSummary
from services.crossbar.crossbar_service import analog_forward_batch, build_analog_network, save_crossbar_state
from services.mlp.mlp_service import predict

if TYPE_CHECKING:
    from apps.bnnsim.dependencies import RunContext

__all__ = [
    "SWEEP_CSV_HEADER",
    "EvaluationService",
    "count_inversions",
    "get_evaluation_service",
    "summarize_sweep",
    "write_sweep_csv",
]

logger = logging.getLogger("bnnsim.evaluation")

SWEEP_CSV_HEADER = ("seed", "trial", "p_switch_fail", "sigma_r", "p_stuck_on", "p_stuck_off", "accuracy")

# ============================================================================
# PROMETHEUS METRICS
# ============================================================================

INFERENCE_SAMPLES_TOTAL = Counter("bnnsim_inference_samples_total", "Samples classified", ["mode"])
SWEEP_TRIALS_TOTAL = Counter("bnnsim_sweep_trials_total", "Completed (trial, value) sweep points")


# ============================================================================
# HELPERS
# ============================================================================


def _confusion(labels: np.ndarray, predictions: np.ndarray, n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(matrix, (labels, predictions), 1)
    return matrix


def _per_class(matrix: np.ndarray) -> list[float | None]:
    totals = matrix.sum(axis=1)
    return [float(matrix[k, k] / totals[k]) if totals[k] else None for k in range(matrix.shape[0])]


def _sweep_device(device: DeviceModel, parameter: SweepParameter, value: float) -> DeviceModel:
    try:
        return DeviceModel.model_validate({**device.model_dump(), parameter.value: value})
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid {parameter.value}={value}: {exc.errors()[0]['msg']}") from exc


def _analog_accuracy(binary_model: BinaryModel, dataset: Dataset, experiment: ExperimentConfig, seed: int) -> float:
    network = build_analog_network(
        binary_model, experiment.device, experiment.constraints, experiment.transfer, seed=seed
    )
    scores, _ = analog_forward_batch(network, dataset.features)
    if dataset.n_samples == 0:
        return 0.0
    return float(np.mean(np.argmax(scores, axis=1) == dataset.labels))


def _run_trial(
    args: tuple[BinaryModel, Dataset, ExperimentConfig, SweepParameter, tuple[float, ...], int, int],
) -> list[SweepRow]:
    """One trial over every sweep value; module-level so process pools can pickle it."""
    binary_model, dataset, experiment, parameter, values, trial, seed = args
    rows = []
    for value in values:
        device = _sweep_device(experiment.device, parameter, value)
        trial_experiment = experiment.model_copy(update={"device": device})
        rows.append(
            SweepRow(
                seed=seed,
                trial=trial,
                parameter=parameter,
                value=value,
                p_switch_fail=device.p_switch_fail,
                sigma_r=device.sigma_r,
                p_stuck_on=device.p_stuck_on,
                p_stuck_off=device.p_stuck_off,
                accuracy=_analog_accuracy(binary_model, dataset, trial_experiment, seed),
            )
        )
    return rows


# ============================================================================
# CORE SERVICE CLASS
# ============================================================================


class EvaluationService:
    """Digital and analog accuracy reports plus non-ideality sweeps.

    Example:
        >>> service = EvaluationService.from_context(get_run_context("eval", seed=7))
        >>> report = service.evaluate_digital(model, test_set)
        >>> print(f"accuracy {report.accuracy:.3f}")
    """

    def __init__(self, ctx: "RunContext | None" = None):
        self._logger = ctx.logger if ctx is not None else logger
        self._progress = ctx.progress_enabled if ctx is not None else False

    @classmethod
    def from_context(cls, ctx: "RunContext") -> "EvaluationService":
        return cls(ctx)

    def _report(
        self,
        mode: EvalMode,
        dataset: Dataset,
        predictions: np.ndarray,
        **fields: object,
    ) -> AccuracyReport:
        matrix = _confusion(dataset.labels, predictions, dataset.n_classes)
        accuracy = float(np.trace(matrix) / dataset.n_samples) if dataset.n_samples else 0.0
        INFERENCE_SAMPLES_TOTAL.labels(mode=mode.value).inc(dataset.n_samples)
        self._logger.info(f"{mode.value} accuracy on {dataset.name}: {accuracy:.4f} ({dataset.n_samples} samples)")
        return AccuracyReport(
            mode=mode,
            dataset=dataset.name,
            n_samples=dataset.n_samples,
            accuracy=accuracy,
            per_class_accuracy=_per_class(matrix),
            confusion_matrix=matrix.tolist(),
            **fields,
        )

    def evaluate_digital(
        self,
        model: TrainedModel,
        dataset: Dataset,
        *,
        binarize_bias: bool = False,
        split: str | None = None,
        experiment: ExperimentConfig | None = None,
    ) -> AccuracyReport:
        """Accuracy of a real-valued (or decoded binary) network."""
        predictions = predict(model, dataset.features) if dataset.n_samples else np.zeros(0, dtype=np.int64)
        return self._report(
            EvalMode.DIGITAL,
            dataset,
            predictions,
            binarize_bias=binarize_bias,
            seed=model.config.seed,
            split=split,
            experiment=experiment,
        )

    def evaluate_analog(
        self,
        binary_model: BinaryModel,
        dataset: Dataset,
        experiment: ExperimentConfig,
        *,
        seed: int,
        split: str | None = None,
        state_path: Path | None = None,
    ) -> AccuracyReport:
        """Program crossbars with ``seed`` and classify through the analog pipeline.

        When ``state_path`` is given the programmed crossbars are exported there.
        """
        network = build_analog_network(
            binary_model,
            experiment.device,
            experiment.constraints,
            experiment.transfer,
            seed=seed,
            log=self._logger,
        )
        if state_path is not None:
            save_crossbar_state(state_path, network.crossbars)
            self._logger.info(f"Crossbar state written to {state_path}")
        scores, ranges = analog_forward_batch(network, dataset.features)
        for current in ranges:
            self._logger.info(
                f"Layer {current.layer} column current range "
                f"[{current.min_amps * 1e6:.3f}, {current.max_amps * 1e6:.3f}] uA"
            )
        return self._report(
            EvalMode.ANALOG,
            dataset,
            np.argmax(scores, axis=1),
            column_current_ranges=ranges,
            binarize_bias=binary_model.binarize_bias,
            seed=seed,
            split=split,
            experiment=experiment,
        )

    def run_sweep(
        self,
        binary_model: BinaryModel,
        dataset: Dataset,
        experiment: ExperimentConfig,
        parameter: SweepParameter,
        values: Sequence[float],
        *,
        trials: int,
        base_seed: int,
        workers: int = 1,
    ) -> list[SweepRow]:
        """Analog accuracy for every ``(trial, value)`` pair.

        Trial ``t`` programs with seed ``base_seed + t`` for every value, so
        values within a trial share their random draws.
        """
        if trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {trials}")
        values = tuple(float(value) for value in values)
        for value in values:
            _sweep_device(experiment.device, parameter, value)
        jobs = [
            (binary_model, dataset, experiment, parameter, values, trial, base_seed + trial) for trial in range(trials)
        ]
        self._logger.info(
            f"Sweeping {parameter.value} over {len(values)} values x {trials} trials with {workers} worker(s)"
        )
        rows: list[SweepRow] = []
        with tqdm(total=len(jobs), desc=f"sweep {parameter.value}", disable=not self._progress) as bar:
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    for trial_rows in pool.map(_run_trial, jobs):
                        rows.extend(trial_rows)
                        SWEEP_TRIALS_TOTAL.inc(len(trial_rows))
                        bar.update()
            else:
                for job in jobs:
                    trial_rows = _run_trial(job)
                    rows.extend(trial_rows)
                    SWEEP_TRIALS_TOTAL.inc(len(trial_rows))
                    bar.update()
        rows.sort(key=lambda row: (row.trial, row.value))
        for summary in summarize_sweep(rows):
            self._logger.info(
                f"{parameter.value}={summary.value:g}: mean accuracy {summary.mean_accuracy:.4f} "
                f"(stderr {summary.stderr:.4f}, {summary.trials} trials)"
            )
        return rows


# ============================================================================
# SWEEP ANALYSIS AND OUTPUT
# ============================================================================


def summarize_sweep(rows: Sequence[SweepRow]) -> list[SweepSummary]:
    """Mean accuracy and its standard error per swept value, ascending by value."""
    grouped: dict[tuple[SweepParameter, float], list[float]] = defaultdict(list)
    for row in rows:
        grouped[(row.parameter, row.value)].append(row.accuracy)
    summaries = []
    for (parameter, value), accuracies in sorted(grouped.items(), key=lambda item: item[0][1]):
        samples = np.array(accuracies)
        stderr = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
        summaries.append(
            SweepSummary(
                parameter=parameter,
                value=value,
                trials=int(samples.size),
                mean_accuracy=float(samples.mean()),
                stderr=stderr,
            )
        )
    return summaries


def count_inversions(summaries: Sequence[SweepSummary]) -> tuple[int, int]:
    """Count increases in mean accuracy along ascending values.

    Returns:
        ``(inversions, significant)`` where ``significant`` counts increases
        larger than the combined standard error of the two points.
    """
    inversions = significant = 0
    for previous, current in pairwise(summaries):
        rise = current.mean_accuracy - previous.mean_accuracy
        if rise > 0:
            inversions += 1
            if rise > math.hypot(previous.stderr, current.stderr):
                significant += 1
    return inversions, significant


def write_sweep_csv(rows: Sequence[SweepRow], path: Path | None = None) -> str:
    """Render sweep rows as CSV; also write to ``path`` when given."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER)
    writer.writerows(
        (row.seed, row.trial, row.p_switch_fail, row.sigma_r, row.p_stuck_on, row.p_stuck_off, row.accuracy)
        for row in rows
    )
    text = buffer.getvalue()
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return text


# ============================================================================
# SERVICE SINGLETON
# ============================================================================

_evaluation_service: EvaluationService | None = None


def get_evaluation_service() -> EvaluationService:
    """Get the context-free singleton evaluation service instance."""
    global _evaluation_service
    if _evaluation_service is None:
        _evaluation_service = EvaluationService()
    return _evaluation_service
