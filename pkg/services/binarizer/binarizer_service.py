"""Four-level weight binarization.

Trained real weights are rounded to the nearest of ``{+w_high, +w_low,
−w_low, −w_high}``. Level magnitudes follow device conductance: ``derive_levels``
normalizes ``w_high`` to 1 with ``w_low = G_off / G_on = r_on / r_off``, so a
decoded weight is proportional to the conductance the crossbar will hold.

Per-Layer Scale
===============
Trained weights rarely sit near magnitude 1. ``binarize_model`` fits one
positive factor ``c`` per layer (least squares over ``|w|``) and rounds that
layer against ``levels.scaled(c)``. The ratio ``w_low / w_high`` stays
``r_on / r_off``; the factor is carried in the layer's stored ``levels`` and
the analog path divides it back out of the column current.

Decision Rule
=============
::
       −w_high      −w_low   0   +w_low      +w_high
    ◀────●───────┼────●──────┼──────●────┼──────●────▶ w
                 │           │           │
            −midpoint    (0 → +w_low)  +midpoint = (w_high + w_low) / 2

    |w| >= midpoint  → high  (ties round to the larger magnitude)
    |w| <  midpoint  → low
    sign             → +1 for w >= 0, −1 otherwise

Key Behaviours
===============
- Idempotent: ``binarize(decode(B))`` reproduces ``B`` cell for cell.
- Odd away from zero: ``binarize(−w) = −binarize(w)`` for ``w ≠ 0``.
- Scale-equivariant: scaling weights and both levels by ``c > 0`` leaves cells unchanged.
- Biases stay real unless ``binarize_bias`` is requested.
"""

import json
import logging
from pathlib import Path

import numpy as np

from common.enums import CellCode
from common.exceptions import DataFormatError, DeviceError, NumericError
from common.models import BinaryModel, BinaryWeightMatrix, TrainedModel, WeightMatrix
from common.schemas import (
    BinaryLayerDocument,
    BinaryModelDocument,
    ExperimentConfig,
    LevelSet,
    NetworkConfig,
)

__all__ = [
    "binarize",
    "binarize_model",
    "binarize_values",
    "decode",
    "decode_model",
    "derive_levels",
    "fit_scale",
    "load_binary_model",
    "binary_model_from_document",
    "binary_model_to_document",
    "save_binary_model",
]

logger = logging.getLogger("bnnsim.binarizer")

SCALE_START_QUANTILES = (0.5, 0.75, 0.9, 1.0)
SCALE_FIT_MAX_ITER = 100


def derive_levels(r_on: float, r_off: float) -> LevelSet:
    """Level magnitudes proportional to conductance, ``w_high`` normalized to 1."""
    if not (r_on > 0 and r_off > 0):
        raise DeviceError(f"Resistances must be positive, got r_on={r_on} r_off={r_off}")
    if not r_on < r_off:
        raise DeviceError(f"Device requires r_on < r_off, got r_on={r_on} r_off={r_off}")
    return LevelSet(w_high=1.0, w_low=r_on / r_off)


def binarize_values(values: np.ndarray, levels: LevelSet) -> tuple[np.ndarray, np.ndarray]:
    """Map real values to ``(signs, is_high)`` under the nearest-level rule."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NumericError("Cannot binarize non-finite weights")
    signs = np.where(values >= 0.0, 1, -1).astype(np.int8)
    is_high = np.abs(values) >= levels.midpoint
    return signs, is_high


def _squared_error(magnitude: np.ndarray, levels: LevelSet) -> float:
    rounded = np.where(magnitude >= levels.midpoint, levels.w_high, levels.w_low)
    return float(np.sum((magnitude - rounded) ** 2))


def fit_scale(values: np.ndarray, levels: LevelSet) -> float:
    """Factor ``c`` minimizing the squared rounding error of ``values`` against ``levels.scaled(c)``.

    Alternates nearest-level assignment with the closed-form update
    ``c = Σ|w|·m / Σm²`` (``m`` the unscaled magnitude of each cell) until the
    assignment stops changing. Several quantiles of ``|w|`` seed the search and
    the lowest-error result wins, so the fit is deterministic. An all-zero
    input returns 1.

    Raises:
        NumericError: Non-finite values.
    """
    magnitude = np.abs(np.asarray(values, dtype=np.float64)).ravel()
    if not np.all(np.isfinite(magnitude)):
        raise NumericError("Cannot fit a level scale to non-finite weights")
    if not np.any(magnitude > 0):
        return 1.0

    best_scale, best_error = 1.0, _squared_error(magnitude, levels)
    for start in np.quantile(magnitude, SCALE_START_QUANTILES):
        scale = float(start) / levels.w_high if start > 0 else float(magnitude.max()) / levels.w_high
        assigned: np.ndarray | None = None
        for _ in range(SCALE_FIT_MAX_ITER):
            is_high = magnitude >= levels.midpoint * scale
            if assigned is not None and np.array_equal(is_high, assigned):
                break
            assigned = is_high
            unit = np.where(is_high, levels.w_high, levels.w_low)
            scale = float(magnitude @ unit / (unit @ unit))
        error = _squared_error(magnitude, levels.scaled(scale))
        if error < best_error:
            best_scale, best_error = scale, error
    return best_scale


def binarize(weights: WeightMatrix, levels: LevelSet, *, binarize_bias: bool = False) -> BinaryWeightMatrix:
    signs, is_high = binarize_values(weights.values, levels)
    bias = weights.bias
    if binarize_bias:
        bias_signs, bias_high = binarize_values(bias, levels)
        bias = bias_signs * np.where(bias_high, levels.w_high, levels.w_low)
    return BinaryWeightMatrix(signs=signs, is_high=is_high, level_set=levels, bias=bias)


def decode(binary: BinaryWeightMatrix) -> WeightMatrix:
    """Exact ``sign × magnitude`` reconstruction."""
    return WeightMatrix(values=binary.signs * binary.magnitudes, bias=binary.bias)


def binarize_model(
    model: TrainedModel,
    levels: LevelSet,
    *,
    binarize_bias: bool = False,
    fit_level_scale: bool = True,
    log: logging.Logger | logging.LoggerAdapter | None = None,
) -> BinaryModel:
    """Binarize every layer, each against ``levels`` rescaled to fit its weights.

    With ``fit_level_scale=False`` every layer uses ``levels`` unchanged.
    """
    log = log or logger
    layers = []
    for index, weights in enumerate(model.weights):
        layer_levels = levels.scaled(fit_scale(weights.values, levels)) if fit_level_scale else levels
        layer = binarize(weights, layer_levels, binarize_bias=binarize_bias)
        high = float(np.mean(layer.is_high))
        negative = float(np.mean(layer.signs < 0))
        log.info(
            f"Layer {index} {layer.rows}x{layer.cols}: w_high={layer_levels.w_high:.6g}, "
            f"{high:.1%} high cells, {negative:.1%} negative cells"
        )
        layers.append(layer)
    return BinaryModel(config=model.config, layers=layers, binarize_bias=binarize_bias)


def decode_model(binary_model: BinaryModel) -> TrainedModel:
    """Digital reference network over decoded binarized weights."""
    return TrainedModel(config=binary_model.config, weights=[decode(layer) for layer in binary_model.layers])


# ============================================================================
# SERIALIZATION
# ============================================================================


def binary_model_to_document(
    binary_model: BinaryModel, experiment: ExperimentConfig | None = None
) -> BinaryModelDocument:
    return BinaryModelDocument(
        layer_sizes=list(binary_model.config.layer_sizes),
        activations=binary_model.activations,
        seed=binary_model.config.seed,
        binarize_bias=binary_model.binarize_bias,
        layers=[
            BinaryLayerDocument(levels=layer.level_set, cells=layer.cell_codes(), biases=layer.bias.tolist())
            for layer in binary_model.layers
        ],
        network=binary_model.config,
        experiment=experiment,
    )


def _layer_from_document(document: BinaryLayerDocument) -> BinaryWeightMatrix:
    codes = document.cells
    if not codes or len({len(row) for row in codes}) != 1:
        raise DataFormatError("Binary layer cells must form a non-empty rectangular matrix")
    signs = np.array([[CellCode(code).sign for code in row] for row in codes], dtype=np.int8)
    is_high = np.array([[CellCode(code).is_high for code in row] for row in codes], dtype=bool)
    return BinaryWeightMatrix(signs=signs, is_high=is_high, level_set=document.levels, bias=document.biases)


def binary_model_from_document(document: BinaryModelDocument) -> BinaryModel:
    config = document.network or NetworkConfig(
        layer_sizes=document.layer_sizes, activation_per_layer=document.activations, seed=document.seed
    )
    layers = [_layer_from_document(layer) for layer in document.layers]
    sizes = config.layer_sizes
    if [(layer.rows, layer.cols) for layer in layers] != list(zip(sizes[:-1], sizes[1:], strict=True)):
        raise DataFormatError("Binary model layer shapes do not match layer_sizes")
    return BinaryModel(config=config, layers=layers, binarize_bias=document.binarize_bias)


def save_binary_model(path: Path, binary_model: BinaryModel, experiment: ExperimentConfig | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(binary_model_to_document(binary_model, experiment).model_dump_json(indent=2), encoding="utf-8")
    return path


def load_binary_model(path: Path) -> tuple[BinaryModel, BinaryModelDocument]:
    if not path.is_file():
        raise DataFormatError("Binary model file not found", path=str(path))
    try:
        document = BinaryModelDocument.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValueError) as exc:
        raise DataFormatError(f"Binary model file is malformed: {exc}", path=str(path)) from exc
    return binary_model_from_document(document), document
