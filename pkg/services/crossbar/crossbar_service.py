"""Memristive crossbar programming and analog inference.

Binary weights are written into a grid of two-state memristors and read back
as column currents. One crossbar stands in for each layer transition; rows
take input voltages, columns sum the signed cell currents.

Analog Layer Pipeline
=====================
::
    activations a ──▶ encode  v = (a − lo)·s ∈ [0, v_in_max]
                         │
                         ▼
    ┌────────────────────────────────┐
    │ crossbar  I_j = Σ sign·v·G     │  G ∈ {1/r_on, 1/r_off} · lognormal
    └────────────────┬───────────────┘  sequential readout, one column per slot
                     ▼
    peripheral injection  I_total = I + (G_on·s/w_high)·(bias + lo·Σ_i w_ij)
                     │
                     ▼
    activation circuit (circuit mode) or  f(I_total·w_high / (G_on·s))  (ideal mode)
                     │
                     ▼
    next stage: output range of f mapped back onto [0, v_in_max]

Programming Faults
==================
Each cell draws three independent uniforms, in this order:
    stuck_on  (p_stuck_on)   → forced to 1/r_on
    stuck_off (p_stuck_off)  → forced to 1/r_off
    switch_fail (p_switch_fail) → keeps its prior state (low for a fresh array)
then every conductance is multiplied by ``exp(sigma_r · N(0, 1))``.

Key Behaviours
===============
- ``program`` is bit-reproducible for a fixed seed; arrays are immutable after.
- With an ideal device, ``I_j = G_on · v_in_max · Σ_i b_ij · x̂_i / w_high`` where
  ``b`` is the decoded binary weight, ``w_high`` its layer's high level and ``x̂``
  the min-max normalized input.
- Flipping every sign negates every column current exactly.
- Read voltages must stay below the programming threshold of the device.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from prometheus_client import Counter

from common.enums import ActivationKind, TransferMode
from common.exceptions import ConstraintError, DataFormatError, InputError
from common.models import BinaryModel, BinaryWeightMatrix, CrossbarArray, LayerReadout, ReadoutSchedule
from common.schemas import (
    AnalogConstraints,
    CrossbarStateDocument,
    CurrentRange,
    DeviceModel,
    NetworkConfig,
    TransferConfig,
)
from services.analog_transfer.analog_transfer_service import apply_transfer
from services.mlp.mlp_service import activation_slopes

__all__ = [
    "AnalogNetwork",
    "AnalogStage",
    "analog_forward",
    "analog_forward_batch",
    "analog_predict",
    "build_analog_network",
    "check_read_disturb",
    "column_current",
    "column_currents_batch",
    "crossbar_from_document",
    "crossbar_to_document",
    "encode_input",
    "load_crossbar_state",
    "program",
    "read_layer",
    "save_crossbar_state",
]

logger = logging.getLogger("bnnsim.crossbar")

VOLTAGE_TOLERANCE = 1e-12

# ============================================================================
# PROMETHEUS METRICS
# ============================================================================

CROSSBAR_PROGRAMS_TOTAL = Counter("bnnsim_crossbar_programs_total", "Crossbar arrays programmed")
CELL_FAULTS_TOTAL = Counter("bnnsim_crossbar_cell_faults_total", "Cells hit by a programming fault", ["kind"])


# ============================================================================
# PROGRAMMING
# ============================================================================


def program(
    binary: BinaryWeightMatrix,
    device: DeviceModel,
    seed: int | np.random.SeedSequence,
    *,
    prior: CrossbarArray | None = None,
) -> CrossbarArray:
    """Write binary weights into a crossbar, injecting the device's non-idealities.

    Args:
        binary: Intended cell states and signs.
        device: Resistances and fault probabilities.
        seed: Seed for the per-cell fault and variation draws.
        prior: Previously written array; cells that fail to switch keep its
            state. ``None`` means a fresh array with every cell low.

    Raises:
        DeviceError: ``r_on >= r_off``.
        InputError: ``prior`` has a different shape.
    """
    device.check()
    shape = (binary.rows, binary.cols)
    if prior is not None and prior.state_high.shape != shape:
        raise InputError(f"Prior crossbar shape {prior.state_high.shape} does not match {shape}")
    prior_high = prior.state_high if prior is not None else np.zeros(shape, dtype=bool)

    rng = np.random.default_rng(seed)
    stuck_on = rng.random(shape) < device.p_stuck_on
    stuck_off = ~stuck_on & (rng.random(shape) < device.p_stuck_off)
    switch_fail = ~stuck_on & ~stuck_off & (rng.random(shape) < device.p_switch_fail)
    variation = np.exp(device.sigma_r * rng.standard_normal(shape))

    state_high = np.where(switch_fail, prior_high, binary.is_high)
    state_high = np.where(stuck_on, True, np.where(stuck_off, False, state_high))
    conductance = np.where(state_high, device.g_on, device.g_off) * variation

    CROSSBAR_PROGRAMS_TOTAL.inc()
    for kind, mask in (("stuck_on", stuck_on), ("stuck_off", stuck_off), ("switch_fail", switch_fail)):
        count = int(mask.sum())
        if count:
            CELL_FAULTS_TOTAL.labels(kind=kind).inc(count)
    return CrossbarArray(
        conductance=conductance, sign=binary.signs, state_high=state_high, intended=binary, device=device
    )


# ============================================================================
# READOUT
# ============================================================================


def check_read_disturb(constraints: AnalogConstraints, device: DeviceModel) -> None:
    """Read voltages must not reach the programming threshold."""
    if not constraints.v_in_max < device.v_threshold:
        raise ConstraintError(
            f"v_in_max={constraints.v_in_max} V reaches the programming threshold {device.v_threshold} V; "
            "reads would disturb stored states"
        )


def _min_max_encode(x: np.ndarray, v_in_max: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise min-max to ``[0, v_in_max]``; returns ``(volts, offset, scale)``."""
    lo = x.min(axis=1, keepdims=True)
    span = x.max(axis=1, keepdims=True) - lo
    safe_span = np.where(span > 0, span, 1.0)
    scale = np.where(span > 0, v_in_max / safe_span, 0.0)
    return np.clip((x - lo) * scale, 0.0, v_in_max), lo, scale


def encode_input(x: np.ndarray, constraints: AnalogConstraints) -> np.ndarray:
    """Min-max normalize one input vector onto ``[0, v_in_max]`` volts.

    A constant vector maps to all zeros.

    Raises:
        ConstraintError: The constraints put the readout transistor outside
            its linear region.
        InputError: ``x`` is empty or not finite.
    """
    constraints.check()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"encode_input expects a non-empty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("encode_input requires finite input")
    volts, _, _ = _min_max_encode(x[None, :], constraints.v_in_max)
    return volts[0]


def _check_voltages(xbar: CrossbarArray, v: np.ndarray, constraints: AnalogConstraints) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != xbar.rows:
        raise InputError(f"Voltage vector has {v.shape[-1]} entries, crossbar has {xbar.rows} rows")
    limit = constraints.v_in_max * (1.0 + VOLTAGE_TOLERANCE)
    if not np.all(np.isfinite(v)) or np.any(v < 0.0) or np.any(v > limit):
        raise ConstraintError(f"Row voltages must lie in [0, {constraints.v_in_max}] V")
    return v


def column_current(
    xbar: CrossbarArray, v: np.ndarray, j: int, constraints: AnalogConstraints | None = None
) -> float:
    """Signed Ohm's-law sum down column ``j``, amperes."""
    constraints = constraints or AnalogConstraints()
    v = _check_voltages(xbar, v, constraints)
    if not 0 <= j < xbar.cols:
        raise InputError(f"Column {j} out of range for {xbar.cols} columns")
    return float(np.sum(xbar.sign[:, j] * v * xbar.conductance[:, j]))


def read_layer(xbar: CrossbarArray, v: np.ndarray, constraints: AnalogConstraints | None = None) -> LayerReadout:
    """Read every column in order, one time slot each."""
    currents = np.array([column_current(xbar, v, j, constraints) for j in range(xbar.cols)])
    return LayerReadout(currents=currents, schedule=ReadoutSchedule.sequential(xbar.cols))


def column_currents_batch(
    xbar: CrossbarArray, v: np.ndarray, constraints: AnalogConstraints | None = None
) -> np.ndarray:
    """All column currents for a batch of voltage rows, shape ``(samples, cols)``."""
    v = _check_voltages(xbar, np.atleast_2d(v), constraints or AnalogConstraints())
    return v @ xbar.signed_conductance


# ============================================================================
# ANALOG NETWORK
# ============================================================================


@dataclass(frozen=True)
class AnalogStage:
    crossbar: CrossbarArray
    kind: ActivationKind
    bias: np.ndarray
    column_weight_sum: np.ndarray
    weight_scale: float = 1.0


@dataclass(frozen=True)
class AnalogNetwork:
    """Programmed crossbars plus the peripheral settings needed to run them."""

    config: NetworkConfig
    stages: tuple[AnalogStage, ...]
    constraints: AnalogConstraints
    transfer: TransferConfig

    @property
    def g_on(self) -> float:
        return self.stages[0].crossbar.device.g_on

    @property
    def crossbars(self) -> list[CrossbarArray]:
        return [stage.crossbar for stage in self.stages]


def build_analog_network(
    binary_model: BinaryModel,
    device: DeviceModel,
    constraints: AnalogConstraints,
    transfer: TransferConfig,
    *,
    seed: int,
    prior: list[CrossbarArray] | None = None,
    log: logging.Logger | logging.LoggerAdapter | None = None,
) -> AnalogNetwork:
    """Program one crossbar per layer with independent child seeds of ``seed``."""
    log = log or logger
    constraints.check()
    device.check()
    check_read_disturb(constraints, device)
    if prior is not None and len(prior) != len(binary_model.layers):
        raise InputError(f"Expected {len(binary_model.layers)} prior crossbars, got {len(prior)}")

    children = np.random.SeedSequence(seed).spawn(len(binary_model.layers))
    stages = []
    layers = zip(binary_model.layers, binary_model.activations, children, strict=True)
    for index, (layer, kind, child) in enumerate(layers):
        xbar = program(layer, device, child, prior=prior[index] if prior is not None else None)
        stages.append(
            AnalogStage(
                crossbar=xbar,
                kind=kind,
                bias=layer.bias,
                column_weight_sum=(layer.signs * layer.magnitudes).sum(axis=0),
                weight_scale=layer.level_set.w_high,
            )
        )
    log.debug(f"Programmed {len(stages)} crossbars (seed={seed}, ideal_device={device.is_ideal})")
    return AnalogNetwork(
        config=binary_model.config, stages=tuple(stages), constraints=constraints, transfer=transfer
    )


def analog_forward_batch(network: AnalogNetwork, x: np.ndarray) -> tuple[np.ndarray, list[CurrentRange]]:
    """Run a batch through every stage.

    Returns:
        Class scores of shape ``(samples, classes)`` and the range of total
        column current fed to each layer's activation circuit. Scores are
        activation values in ideal mode and output voltages in circuit mode.
    """
    x = np.asarray(x, dtype=np.float64)
    x = x[None, :] if x.ndim == 1 else x
    if x.ndim != 2 or x.shape[1] != network.config.input_size:
        raise InputError(f"Input has shape {x.shape}, expected trailing dimension {network.config.input_size}")
    if not np.all(np.isfinite(x)):
        raise InputError("Analog inference requires finite input")

    v_in_max = network.constraints.v_in_max
    slopes = activation_slopes(network.config)
    ranges: list[CurrentRange] = []
    volts, lo, scale = _min_max_encode(x, v_in_max)
    acts = x
    for index, stage in enumerate(network.stages):
        if index > 0:
            out_lo, out_hi = network.stages[index - 1].kind.output_range
            lo = np.full((acts.shape[0], 1), out_lo)
            scale = np.full((acts.shape[0], 1), v_in_max / (out_hi - out_lo))
            volts = np.clip((acts - lo) * scale, 0.0, v_in_max)
        effective_scale = np.where(scale > 0, scale, v_in_max)
        amps_per_unit = network.g_on * effective_scale / stage.weight_scale
        currents = column_currents_batch(stage.crossbar, volts, network.constraints)
        total = currents + amps_per_unit * (stage.bias + lo * stage.column_weight_sum)
        ranges.append(
            CurrentRange(
                layer=index,
                min_amps=float(total.min()) if total.size else 0.0,
                max_amps=float(total.max()) if total.size else 0.0,
            )
        )
        acts = apply_transfer(stage.kind, total, network.transfer, amps_per_unit=amps_per_unit, **slopes)
    if network.transfer.mode == TransferMode.CIRCUIT:
        return acts * network.transfer.rail, ranges
    return acts, ranges


def analog_forward(network: AnalogNetwork, x: np.ndarray) -> np.ndarray:
    """Class scores for one input vector."""
    scores, _ = analog_forward_batch(network, np.asarray(x, dtype=np.float64)[None, :])
    return scores[0]


def analog_predict(network: AnalogNetwork, x: np.ndarray) -> np.ndarray:
    scores, _ = analog_forward_batch(network, x)
    return np.argmax(scores, axis=1)


# ============================================================================
# STATE EXPORT
# ============================================================================


def crossbar_to_document(xbar: CrossbarArray) -> CrossbarStateDocument:
    return CrossbarStateDocument(r=xbar.resistance.tolist(), sign=xbar.sign.astype(int).tolist())


def crossbar_from_document(
    document: CrossbarStateDocument, intended: BinaryWeightMatrix, device: DeviceModel
) -> CrossbarArray:
    """Replay an exported crossbar; the logical state is recovered from the nearer endpoint."""
    resistance = np.array(document.r, dtype=np.float64)
    sign = np.array(document.sign, dtype=np.int8)
    if resistance.shape != (intended.rows, intended.cols) or sign.shape != resistance.shape:
        raise DataFormatError(f"Crossbar state shape {resistance.shape} does not match the binary layer")
    if not np.all(resistance > 0) or not np.all(np.abs(sign) == 1):
        raise DataFormatError("Crossbar state needs positive resistances and ±1 signs")
    state_high = np.abs(np.log(resistance / device.r_on)) < np.abs(np.log(resistance / device.r_off))
    return CrossbarArray(
        conductance=1.0 / resistance, sign=sign, state_high=state_high, intended=intended, device=device
    )


def save_crossbar_state(path: Path, crossbars: list[CrossbarArray]) -> Path:
    """Write one ``{"r": …, "sign": …}`` object per layer as a JSON list."""
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [crossbar_to_document(xbar).model_dump() for xbar in crossbars]
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_crossbar_state(path: Path) -> list[CrossbarStateDocument]:
    if not path.is_file():
        raise DataFormatError("Crossbar state file not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [CrossbarStateDocument.model_validate(item) for item in payload]
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataFormatError(f"Crossbar state file is malformed: {exc}", path=str(path)) from exc
