"""In-memory numeric models shared by all services.

These dataclasses hold numpy arrays and are treated as immutable after
construction: every array is flagged read-only in ``__post_init__``.

Data Model Layout
=================
::
    Dataset
    ├─ features: float64 (samples × dims)
    ├─ labels:   int64   (samples,)
    ├─ n_classes: int
    └─ name: str

    TrainedModel
    ├─ config: NetworkConfig
    ├─ weights: [WeightMatrix]          one per layer transition
    │   ├─ values: float64 (rows = inputs, cols = outputs)
    │   └─ bias:   float64 (cols,)
    └─ training_loss_history: [float]

    BinaryModel
    ├─ config: NetworkConfig
    ├─ binarize_bias: bool
    └─ layers: [BinaryWeightMatrix]
        ├─ signs:   int8 ±1 (rows × cols)
        ├─ is_high: bool    (rows × cols)
        ├─ level_set: LevelSet
        └─ bias:    float64 (cols,)

    CrossbarArray
    ├─ conductance: float64 siemens (rows × cols), realized after programming
    ├─ sign:        int8 ±1         (R_sign path state)
    ├─ state_high:  bool            (logical state before variation)
    ├─ intended:    BinaryWeightMatrix
    └─ device:      DeviceModel

Key Behaviours
===============
- Weight matrices are stored input-major, so a layer computes ``a @ W + b``.
- Numpy arrays compare element-wise, so the classes holding them disable the
  generated ``__eq__`` and offer explicit comparison helpers instead.
"""

from dataclasses import dataclass, field

import numpy as np

from common.enums import ActivationKind, CellCode
from common.exceptions import InputError
from common.schemas import DeviceModel, LevelSet, NetworkConfig

__all__ = [
    "BinaryModel",
    "BinaryWeightMatrix",
    "CrossbarArray",
    "Dataset",
    "LayerReadout",
    "ReadoutSchedule",
    "TrainedModel",
    "WeightMatrix",
]


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str

    def __post_init__(self) -> None:
        features = np.array(self.features, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise InputError(f"Dataset features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise InputError(f"Dataset has {features.shape[0]} samples but {labels.shape[0]} labels")
        if not np.all(np.isfinite(features)):
            raise InputError("Dataset features must be finite")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise InputError(f"Labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "labels", _frozen(labels))

    @property
    def n_samples(self) -> int:
        return int(self.features.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def take(self, indices: np.ndarray, name: str | None = None) -> "Dataset":
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            n_classes=self.n_classes,
            name=name or self.name,
        )


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    values: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        bias = np.array(self.bias, dtype=np.float64)
        if values.ndim != 2 or bias.shape != (values.shape[1],):
            raise InputError(f"Weight shape {values.shape} does not match bias shape {bias.shape}")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(bias))):
            raise InputError("Weight matrix values must be finite")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "bias", _frozen(bias))

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])

    def allclose(self, other: "WeightMatrix", rtol: float = 0.0, atol: float = 0.0) -> bool:
        return (
            self.values.shape == other.values.shape
            and np.allclose(self.values, other.values, rtol=rtol, atol=atol)
            and np.allclose(self.bias, other.bias, rtol=rtol, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class TrainedModel:
    config: NetworkConfig
    weights: list[WeightMatrix]
    training_loss_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1:
            raise InputError(f"Expected {len(sizes) - 1} weight matrices, got {len(self.weights)}")
        for index, layer in enumerate(self.weights):
            if (layer.rows, layer.cols) != (sizes[index], sizes[index + 1]):
                raise InputError(
                    f"Layer {index} has shape {(layer.rows, layer.cols)}, "
                    f"expected {(sizes[index], sizes[index + 1])}"
                )

    @property
    def activations(self) -> list[ActivationKind]:
        return list(self.config.activation_per_layer)


@dataclass(frozen=True, eq=False)
class BinaryWeightMatrix:
    signs: np.ndarray
    is_high: np.ndarray
    level_set: LevelSet
    bias: np.ndarray

    def __post_init__(self) -> None:
        signs = np.array(self.signs, dtype=np.int8)
        is_high = np.array(self.is_high, dtype=bool)
        bias = np.array(self.bias, dtype=np.float64)
        if signs.ndim != 2 or signs.shape != is_high.shape:
            raise InputError(f"Sign shape {signs.shape} does not match level shape {is_high.shape}")
        if not np.all(np.abs(signs) == 1):
            raise InputError("Every binarized cell sign must be +1 or -1")
        if bias.shape != (signs.shape[1],):
            raise InputError(f"Bias shape {bias.shape} does not match {signs.shape[1]} columns")
        object.__setattr__(self, "signs", _frozen(signs))
        object.__setattr__(self, "is_high", _frozen(is_high))
        object.__setattr__(self, "bias", _frozen(bias))

    @property
    def rows(self) -> int:
        return int(self.signs.shape[0])

    @property
    def cols(self) -> int:
        return int(self.signs.shape[1])

    @property
    def magnitudes(self) -> np.ndarray:
        return np.where(self.is_high, self.level_set.w_high, self.level_set.w_low)

    def cell_codes(self) -> list[list[CellCode]]:
        return [
            [CellCode.from_cell(int(sign), bool(high)) for sign, high in zip(sign_row, high_row, strict=True)]
            for sign_row, high_row in zip(self.signs, self.is_high, strict=True)
        ]

    def same_cells(self, other: "BinaryWeightMatrix") -> bool:
        return (
            self.signs.shape == other.signs.shape
            and bool(np.array_equal(self.signs, other.signs))
            and bool(np.array_equal(self.is_high, other.is_high))
        )


@dataclass(frozen=True, eq=False)
class BinaryModel:
    config: NetworkConfig
    layers: list[BinaryWeightMatrix]
    binarize_bias: bool = False

    @property
    def activations(self) -> list[ActivationKind]:
        return list(self.config.activation_per_layer)


@dataclass(frozen=True, eq=False)
class CrossbarArray:
    conductance: np.ndarray
    sign: np.ndarray
    state_high: np.ndarray
    intended: BinaryWeightMatrix
    device: DeviceModel

    def __post_init__(self) -> None:
        conductance = np.array(self.conductance, dtype=np.float64)
        if conductance.shape != (self.intended.rows, self.intended.cols):
            raise InputError(f"Crossbar shape {conductance.shape} does not match source weights")
        if not np.all(conductance > 0):
            raise InputError("Crossbar conductances must be strictly positive")
        object.__setattr__(self, "conductance", _frozen(conductance))
        object.__setattr__(self, "sign", _frozen(np.array(self.sign, dtype=np.int8)))
        object.__setattr__(self, "state_high", _frozen(np.array(self.state_high, dtype=bool)))

    @property
    def rows(self) -> int:
        return int(self.conductance.shape[0])

    @property
    def cols(self) -> int:
        return int(self.conductance.shape[1])

    @property
    def resistance(self) -> np.ndarray:
        return 1.0 / self.conductance

    @property
    def signed_conductance(self) -> np.ndarray:
        return self.sign * self.conductance


@dataclass(frozen=True)
class ReadoutSchedule:
    """Sequential column readout record: one time slot per column."""

    column_order: tuple[int, ...]
    slots: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.slots)

    @classmethod
    def sequential(cls, cols: int) -> "ReadoutSchedule":
        """Columns read left to right, column ``j`` in slot ``j``."""
        order = tuple(range(cols))
        return cls(column_order=order, slots=order)


@dataclass(frozen=True, eq=False)
class LayerReadout:
    currents: np.ndarray
    schedule: ReadoutSchedule
