"""Pydantic schemas for configuration, artifacts and reports.

This module defines every validated structure that crosses a file or CLI
boundary: experiment configuration, serialized models, crossbar state,
accuracy and cost reports, sweep rows.

Schema Hierarchy
=================
::
    ExperimentConfig (Input, JSON config file)
    ├─ dataset: DatasetConfig
    ├─ network: NetworkConfig
    ├─ device: DeviceModel
    ├─ constraints: AnalogConstraints
    ├─ transfer: TransferConfig
    ├─ cost_policy: CostPolicy
    ├─ trials / binarize_bias / fit_level_scale / sweep_workers
    └─ outputs: OutputPaths

    TrainedModelDocument (Artifact)     BinaryModelDocument (Artifact)
    ├─ layer_sizes, activations         ├─ layer_sizes, activations, seed
    ├─ weights (row-major), biases      ├─ layers: [BinaryLayerDocument]
    ├─ seed, training_loss_history      │   ├─ levels: LevelSet
    └─ experiment (audit trail)         │   ├─ cells: [["+H","-L",...]]
                                        │   └─ biases
                                        └─ experiment (audit trail)

    AccuracyReport / CostReport / SweepRow / SweepSummary (Output)

How to Use
===========
**Step 1 — Load a config**::
    config = ExperimentConfig.model_validate_json(Path("configs/iris.json").read_text())

**Step 2 — Check physical consistency**::
    config.device.check()        # DeviceError on r_on >= r_off
    config.constraints.check()   # ConstraintError on v_in_max > v_drain_max

**Step 3 — Dump resolved defaults**::
    print(config.model_dump_json(indent=2))

Key Behaviours
===============
- Field-level ranges (positivity, probabilities in [0, 1]) are enforced by
  pydantic at construction time.
- Cross-field physics (device ordering, linear-region voltages) is checked
  by ``check()`` so callers get a category-coded ``DeviceError`` or
  ``ConstraintError`` instead of a generic validation error.
- Cost data is held as ``Decimal`` so tabulated component values survive exactly.
"""

import math
from decimal import Decimal
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from common.enums import (
    ActivationKind,
    CellCode,
    DatasetName,
    EvalMode,
    SweepParameter,
    TransferMode,
    VoltageShiftPolicy,
)
from common.exceptions import ConstraintError, DeviceError

__all__ = [
    "AccuracyReport",
    "AnalogConstraints",
    "BinaryLayerDocument",
    "BinaryModelDocument",
    "CostEntry",
    "CostLineItem",
    "CostPolicy",
    "CostReport",
    "CostReportDocument",
    "CrossbarStateDocument",
    "CurrentRange",
    "DatasetConfig",
    "DeviceModel",
    "ExperimentConfig",
    "LevelSet",
    "NetworkConfig",
    "OutputPaths",
    "ReferenceComparison",
    "SweepRow",
    "SweepSummary",
    "TrainedModelDocument",
    "TransferConfig",
]

UINT64_MAX = 2**64 - 1
MNIST_HIDDEN = 64
IRIS_HIDDEN = 10
DEEP_EXTRA_HIDDEN_LAYERS = 3


# ============================================================================
# NETWORK
# ============================================================================


class NetworkConfig(BaseModel):
    """Layer topology and gradient-descent hyperparameters."""

    model_config = ConfigDict(frozen=True)

    layer_sizes: list[int] = Field(..., min_length=2, description="Neurons per layer, input first")
    activation_per_layer: list[ActivationKind] = Field(
        default_factory=list,
        description="One activation per non-input layer; a single entry is broadcast, empty means sigmoid",
    )
    learning_rate: float = Field(0.1, gt=0)
    epochs: int = Field(200, ge=0)
    seed: int = Field(0, ge=0, le=UINT64_MAX)
    batch_size: int = Field(1, ge=1)
    init_scale: float = Field(0.5, gt=0, description="Weights start uniform in [-init_scale, init_scale]")
    approx_sigmoid_slope: float = Field(0.25, gt=0)
    approx_tanh_slope: float = Field(1.0, gt=0)

    @field_validator("layer_sizes")
    @classmethod
    def validate_layer_sizes(cls, v: list[int]) -> list[int]:
        if any(size < 1 for size in v):
            raise ValueError("All layer sizes must be >= 1")
        return v

    @model_validator(mode="before")
    @classmethod
    def broadcast_activations(cls, data: object) -> object:
        if not isinstance(data, dict) or not isinstance(data.get("layer_sizes"), list):
            return data
        transitions = len(data["layer_sizes"]) - 1
        acts = list(data.get("activation_per_layer") or [])
        if not acts:
            acts = [ActivationKind.SIGMOID] * transitions
        elif len(acts) == 1 and transitions > 1:
            acts = acts * transitions
        return {**data, "activation_per_layer": acts}

    @model_validator(mode="after")
    def validate_activation_count(self) -> "NetworkConfig":
        if len(self.activation_per_layer) != self.n_transitions:
            raise ValueError(f"Expected {self.n_transitions} activations, got {len(self.activation_per_layer)}")
        return self

    @property
    def n_transitions(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def mnist_default(cls, *, deep: bool = False, **overrides: object) -> "NetworkConfig":
        hidden = [MNIST_HIDDEN] * (1 + (DEEP_EXTRA_HIDDEN_LAYERS if deep else 0))
        return cls.model_validate({"layer_sizes": [784, *hidden, 10], "epochs": 10, **overrides})

    @classmethod
    def iris_default(cls, *, deep: bool = False, **overrides: object) -> "NetworkConfig":
        hidden = [IRIS_HIDDEN] * (1 + (DEEP_EXTRA_HIDDEN_LAYERS if deep else 0))
        return cls.model_validate({"layer_sizes": [4, *hidden, 3], "epochs": 500, **overrides})


class LevelSet(BaseModel):
    """The two positive weight magnitudes of the four-level set."""

    model_config = ConfigDict(frozen=True)

    w_high: float = Field(..., gt=0)
    w_low: float = Field(..., gt=0)

    @model_validator(mode="after")
    def validate_order(self) -> "LevelSet":
        if not self.w_low < self.w_high:
            raise ValueError("LevelSet requires 0 < w_low < w_high")
        if not (math.isfinite(self.w_high) and math.isfinite(self.w_low)):
            raise ValueError("LevelSet values must be finite")
        return self

    @property
    def midpoint(self) -> float:
        """Decision threshold between the low and high magnitude."""
        return (self.w_high + self.w_low) / 2.0

    def scaled(self, factor: float) -> "LevelSet":
        return LevelSet(w_high=self.w_high * factor, w_low=self.w_low * factor)


# ============================================================================
# DEVICE AND ANALOG CONSTRAINTS
# ============================================================================


class DeviceModel(BaseModel):
    """Memristor endpoint resistances and stochastic non-ideality parameters."""

    model_config = ConfigDict(frozen=True)

    r_on: float = Field(3000.0, gt=0, description="Low-resistance state, ohms")
    r_off: float = Field(62000.0, gt=0, description="High-resistance state, ohms")
    v_threshold: float = Field(1.0, gt=0, description="Programming threshold, volts")
    sigma_r: float = Field(0.0, ge=0, description="Log-space std-dev of conductance variation")
    p_switch_fail: float = Field(0.0, ge=0, le=1)
    p_stuck_on: float = Field(0.0, ge=0, le=1)
    p_stuck_off: float = Field(0.0, ge=0, le=1)

    def check(self) -> None:
        if not self.r_on < self.r_off:
            raise DeviceError(f"Device requires r_on < r_off, got r_on={self.r_on} r_off={self.r_off}")

    @property
    def g_on(self) -> float:
        return 1.0 / self.r_on

    @property
    def g_off(self) -> float:
        return 1.0 / self.r_off

    @property
    def is_ideal(self) -> bool:
        return self.sigma_r == 0 and self.p_switch_fail == 0 and self.p_stuck_on == 0 and self.p_stuck_off == 0


class AnalogConstraints(BaseModel):
    """Voltage limits that keep the readout transistors in their linear region."""

    model_config = ConfigDict(frozen=True)

    v_in_max: float = Field(0.1, gt=0, description="Crossbar row input span, volts")
    v_drain_max: float = Field(0.65, gt=0)
    v_gate: float = Field(1.0, gt=0, description="Readout control voltage V_c")
    v_transistor_threshold: float = Field(0.35, gt=0)
    v_dd: float = Field(1.8, gt=0)

    def check(self) -> None:
        if self.v_in_max > self.v_drain_max:
            raise ConstraintError(
                f"v_in_max={self.v_in_max} V exceeds v_drain_max={self.v_drain_max} V; "
                "readout transistor leaves its linear region"
            )
        if not self.v_drain_max < self.v_dd:
            raise ConstraintError(f"v_drain_max={self.v_drain_max} V must stay below v_dd={self.v_dd} V")
        if self.v_drain_max > self.v_gate - self.v_transistor_threshold + 1e-12:
            raise ConstraintError(
                f"v_drain_max={self.v_drain_max} V exceeds v_gate - v_t = "
                f"{self.v_gate - self.v_transistor_threshold:.3f} V"
            )
        if self.v_gate > self.v_dd:
            raise ConstraintError(f"v_gate={self.v_gate} V exceeds v_dd={self.v_dd} V")


class TransferConfig(BaseModel):
    """Analog activation transfer-curve parameters."""

    model_config = ConfigDict(frozen=True)

    i_range: float = Field(90e-6, gt=0, description="Half-width of the input current span, amperes")
    rail: float = Field(1.0, gt=0, description="Output voltage span")
    gain_k: float | None = Field(None, gt=0, description="Sigmoid steepness per ampere; default ln(99)/i_range")
    mode: TransferMode = TransferMode.IDEAL
    tau: float = Field(0.0, ge=0, description="First-order lag time constant, seconds")
    approx_sigmoid_sat_factor: float = Field(2.0, gt=0, description="i_sat = i_range / factor")
    approx_tanh_sat_factor: float = Field(1.6, gt=0, description="i_sat = i_range / factor")

    @property
    def effective_gain_k(self) -> float:
        return self.gain_k if self.gain_k is not None else math.log(99.0) / self.i_range

    def i_sat(self, kind: ActivationKind) -> float:
        """Saturation current of the piecewise-linear curve for ``kind``."""
        factor = self.approx_tanh_sat_factor if kind.is_tanh_family else self.approx_sigmoid_sat_factor
        return self.i_range / factor


# ============================================================================
# COST MODEL
# ============================================================================


class CostPolicy(BaseModel):
    """Component counting policy for cost estimates."""

    model_config = ConfigDict(frozen=True)

    weight_control_scope: str = Field("column", pattern="^(column|cell)$")
    voltage_shift: VoltageShiftPolicy = VoltageShiftPolicy.PER_TANH_NEURON
    activation_override: ActivationKind | None = None


class CostEntry(BaseModel):
    """One itemized power/area datum, SI units held exactly."""

    model_config = ConfigDict(frozen=True)

    component: str
    power: Decimal = Field(..., gt=0, description="watts")
    area: Decimal = Field(..., gt=0, description="square metres")

    @property
    def area_um2(self) -> Decimal:
        return self.area * Decimal(10) ** 12


class CostLineItem(BaseModel):
    component: str
    count: int = Field(..., ge=0)
    unit_power: Decimal
    unit_area: Decimal

    @property
    def subtotal_power(self) -> Decimal:
        return self.unit_power * self.count

    @property
    def subtotal_area(self) -> Decimal:
        return self.unit_area * self.count


class ReferenceComparison(BaseModel):
    power: Decimal
    area: Decimal
    power_deviation_pct: float
    area_deviation_pct: float


class CostReport(BaseModel):
    itemized: list[CostLineItem]
    latency_slots: int = Field(..., ge=0)
    composition_rule: str
    assumptions: list[str] = Field(default_factory=list)
    reference: ReferenceComparison | None = None

    @property
    def total_power(self) -> Decimal:
        return sum((item.subtotal_power for item in self.itemized), Decimal(0))

    @property
    def total_area(self) -> Decimal:
        return sum((item.subtotal_area for item in self.itemized), Decimal(0))


class CostReportDocument(BaseModel):
    """JSON view of a ``CostReport``: watts and square micrometres."""

    itemized: list[dict[str, float | int | str]]
    total_power_w: float
    total_area_um2: float
    latency_slots: int
    composition_rule: str
    assumptions: list[str]
    reference: dict[str, float] | None = None
    experiment: "ExperimentConfig | None" = None


# ============================================================================
# EXPERIMENT
# ============================================================================


class DatasetConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: DatasetName = DatasetName.IRIS
    iris_path: Path | None = None
    mnist_dir: Path | None = None
    train_fraction: float = Field(0.8, gt=0, lt=1, description="IRIS split; MNIST uses the official split")
    train_limit: int | None = Field(None, ge=1, description="Desk-scale subset of the training set")
    test_limit: int | None = Field(None, ge=1)
    normalize: bool = True


class OutputPaths(BaseModel):
    model_config = ConfigDict(frozen=True)

    model: Path = Path("artifacts/model.json")
    binary_model: Path = Path("artifacts/binary_model.json")
    eval_report: Path = Path("artifacts/eval_report.json")
    sweep_csv: Path = Path("artifacts/sweep.csv")
    cost_report: Path = Path("artifacts/cost_report.json")
    curves_csv: Path = Path("artifacts/curves.csv")
    crossbar_state: Path | None = None


class ExperimentConfig(BaseModel):
    """Everything one CLI run needs; dumped verbatim into every artifact."""

    model_config = ConfigDict(frozen=True)

    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    network: NetworkConfig = Field(default_factory=lambda: NetworkConfig.iris_default())
    device: DeviceModel = Field(default_factory=DeviceModel)
    constraints: AnalogConstraints = Field(default_factory=AnalogConstraints)
    transfer: TransferConfig = Field(default_factory=TransferConfig)
    cost_policy: CostPolicy = Field(default_factory=CostPolicy)
    trials: int = Field(1, ge=1)
    binarize_bias: bool = False
    fit_level_scale: bool = True
    sweep_workers: int | None = Field(None, ge=1)
    outputs: OutputPaths = Field(default_factory=OutputPaths)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return self.model_copy(update={"network": self.network.model_copy(update={"seed": seed})})


# ============================================================================
# ARTIFACT DOCUMENTS
# ============================================================================


class TrainedModelDocument(BaseModel):
    layer_sizes: list[int]
    activations: list[ActivationKind]
    weights: list[list[float]] = Field(..., description="One row-major flattened matrix per layer transition")
    biases: list[list[float]]
    seed: int
    training_loss_history: list[float] = Field(default_factory=list)
    network: NetworkConfig | None = None
    experiment: ExperimentConfig | None = None


class BinaryLayerDocument(BaseModel):
    levels: LevelSet
    cells: list[list[CellCode]]
    biases: list[float]


class BinaryModelDocument(BaseModel):
    layer_sizes: list[int]
    activations: list[ActivationKind]
    seed: int
    binarize_bias: bool = False
    layers: list[BinaryLayerDocument]
    network: NetworkConfig | None = None
    experiment: ExperimentConfig | None = None


class CrossbarStateDocument(BaseModel):
    r: list[list[float]] = Field(..., description="Realized cell resistance, ohms")
    sign: list[list[int]]


# ============================================================================
# REPORTS
# ============================================================================


class CurrentRange(BaseModel):
    layer: int
    min_amps: float
    max_amps: float


class AccuracyReport(BaseModel):
    mode: EvalMode
    dataset: str
    n_samples: int
    accuracy: float
    per_class_accuracy: list[float | None]
    confusion_matrix: list[list[int]] = Field(..., description="rows = true class, cols = predicted class")
    column_current_ranges: list[CurrentRange] | None = None
    binarize_bias: bool = False
    seed: int | None = None
    split: str | None = None
    experiment: ExperimentConfig | None = None


class SweepRow(BaseModel):
    seed: int
    trial: int
    parameter: SweepParameter
    value: float
    p_switch_fail: float
    sigma_r: float
    p_stuck_on: float
    p_stuck_off: float
    accuracy: float


class SweepSummary(BaseModel):
    parameter: SweepParameter
    value: float
    trials: int
    mean_accuracy: float
    stderr: float


CostReportDocument.model_rebuild()
