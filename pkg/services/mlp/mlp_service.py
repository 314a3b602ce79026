"""Real-valued multilayer perceptron: forward inference and backprop training.

This module is the mathematical reference against which analog crossbar
inference is validated. Networks are plain stacks of dense layers; each layer
computes ``a_l = f_l(a_{l-1} @ W_l + b_l)`` with one of four activations.

Training Flow
=============
::
    ┌──────────────┐
    │ NetworkConfig│  seed ──▶ np.random.default_rng
    └──────┬───────┘
           ▼
    ┌──────────────┐
    │ initialize   │  W ~ U[-init_scale, init_scale], b = 0
    └──────┬───────┘
           ▼
    ┌──────────────┐   per epoch: permutation from the same rng
    │ mini-batches │──▶ forward ─▶ 0.5·Σ(a − onehot)² ─▶ backprop ─▶ W -= lr·∇W
    └──────┬───────┘
           ▼
    ┌──────────────┐
    │ loss history │  [initial, epoch 1, …, epoch N] on the full training set
    └──────────────┘

How to Use
===========
**Step 1 — Train**::
    model = train(NetworkConfig.iris_default(seed=7), train_set)

**Step 2 — Evaluate**::
    acc = accuracy(model, test_set)

**Step 3 — Validate gradients**::
    err = gradient_check(model, (x, label), epsilon=1e-5)

Key Behaviours
===============
- Loss is the batch mean of ``0.5 * Σ_k (a_k − y_k)²`` against one-hot targets.
- Approximate activations use subgradient 0 outside the linear region and the
  slope inside; the boundary belongs to the linear region.
- Training is bit-reproducible for a fixed seed; forward is pure.
"""

import json
import logging
import math
import time
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from prometheus_client import Counter, Histogram
from tqdm import tqdm

from common.enums import ActivationKind
from common.exceptions import ConfigurationError, DataFormatError, InputError, TrainingError
from common.models import Dataset, TrainedModel, WeightMatrix
from common.schemas import ExperimentConfig, NetworkConfig, TrainedModelDocument
from services.dataio.dataio_service import one_hot

__all__ = [
    "GradientFn",
    "accuracy",
    "activation",
    "activation_derivative",
    "activation_slopes",
    "backprop",
    "forward",
    "gradient_check",
    "initialize_model",
    "load_model",
    "mean_squared_loss",
    "model_from_document",
    "model_to_document",
    "predict",
    "save_model",
    "train",
]

logger = logging.getLogger("bnnsim.mlp")

GRADIENT_CHECK_FLOOR = 1e-6

GradientFn = Callable[
    [list[np.ndarray], list[np.ndarray], NetworkConfig, np.ndarray, np.ndarray],
    list[tuple[np.ndarray, np.ndarray]],
]

# ============================================================================
# PROMETHEUS METRICS
# ============================================================================

TRAINING_EPOCHS_TOTAL = Counter("bnnsim_training_epochs_total", "Completed training epochs")
TRAINING_DURATION = Histogram(
    "bnnsim_training_duration_seconds",
    "Wall time of a full training run",
    buckets=[0.1, 0.5, 1.0, 5.0, 15.0, 60.0, 300.0, 900.0],
)


# ============================================================================
# ACTIVATIONS
# ============================================================================


def _parse_kind(kind: ActivationKind | str) -> ActivationKind:
    try:
        return ActivationKind(kind)
    except ValueError as exc:
        raise ConfigurationError(f"Unknown activation kind '{kind}'") from exc


def activation(
    kind: ActivationKind | str,
    x: float | np.ndarray,
    *,
    sigmoid_slope: float = 0.25,
    tanh_slope: float = 1.0,
) -> float | np.ndarray:
    """Evaluate an activation; scalars in, scalars out."""
    kind = _parse_kind(kind)
    z = np.asarray(x, dtype=np.float64)
    match kind:
        case ActivationKind.SIGMOID:
            out = np.exp(-np.logaddexp(0.0, -z))
        case ActivationKind.TANH:
            out = np.tanh(z)
        case ActivationKind.APPROX_SIGMOID:
            out = np.clip(sigmoid_slope * z + 0.5, 0.0, 1.0)
        case ActivationKind.APPROX_TANH:
            out = np.clip(tanh_slope * z, -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def activation_derivative(
    kind: ActivationKind | str,
    z: np.ndarray,
    *,
    sigmoid_slope: float = 0.25,
    tanh_slope: float = 1.0,
) -> np.ndarray:
    """Derivative with respect to the pre-activation ``z``."""
    kind = _parse_kind(kind)
    z = np.asarray(z, dtype=np.float64)
    match kind:
        case ActivationKind.SIGMOID:
            s = np.exp(-np.logaddexp(0.0, -z))
            return s * (1.0 - s)
        case ActivationKind.TANH:
            return 1.0 - np.tanh(z) ** 2
        case ActivationKind.APPROX_SIGMOID:
            u = sigmoid_slope * z + 0.5
            return np.where((u >= 0.0) & (u <= 1.0), sigmoid_slope, 0.0)
        case ActivationKind.APPROX_TANH:
            u = tanh_slope * z
            return np.where(np.abs(u) <= 1.0, tanh_slope, 0.0)


def _kink_region(kind: ActivationKind, z: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """-1 below, 0 inside, +1 above the linear region of a clamped activation."""
    if kind == ActivationKind.APPROX_SIGMOID:
        u = config.approx_sigmoid_slope * z + 0.5
        return np.where(u < 0.0, -1, np.where(u > 1.0, 1, 0))
    if kind == ActivationKind.APPROX_TANH:
        u = config.approx_tanh_slope * z
        return np.where(u < -1.0, -1, np.where(u > 1.0, 1, 0))
    return np.zeros(z.shape, dtype=int)


def activation_slopes(config: NetworkConfig) -> dict[str, float]:
    return {"sigmoid_slope": config.approx_sigmoid_slope, "tanh_slope": config.approx_tanh_slope}


# ============================================================================
# FORWARD / BACKWARD
# ============================================================================


def _forward_pass(
    weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], config: NetworkConfig, x: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    slopes = activation_slopes(config)
    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = [x]
    for w, b, kind in zip(weights, biases, config.activation_per_layer, strict=True):
        z = acts[-1] @ w + b
        pre.append(z)
        acts.append(np.asarray(activation(kind, z, **slopes)))
    return pre, acts


def _as_batch(model_or_config: TrainedModel | NetworkConfig, x: np.ndarray) -> tuple[np.ndarray, bool]:
    config = model_or_config.config if isinstance(model_or_config, TrainedModel) else model_or_config
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    batch = x[None, :] if single else x
    if batch.ndim != 2 or batch.shape[1] != config.input_size:
        raise InputError(f"Input has shape {x.shape}, expected trailing dimension {config.input_size}")
    if not np.all(np.isfinite(batch)):
        raise InputError("Input must be finite")
    return batch, single


def forward(model: TrainedModel, x: np.ndarray) -> list[np.ndarray]:
    """Return every layer's activation, input first; accepts one vector or a batch."""
    batch, single = _as_batch(model, x)
    _, acts = _forward_pass(
        [layer.values for layer in model.weights], [layer.bias for layer in model.weights], model.config, batch
    )
    return [a[0] for a in acts] if single else acts


def predict(model: TrainedModel, x: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, np.atleast_2d(x))[-1], axis=1)


def accuracy(model: TrainedModel, dataset: Dataset) -> float:
    if dataset.n_samples == 0:
        return 0.0
    return float(np.mean(predict(model, dataset.features) == dataset.labels))


def mean_squared_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    return float(0.5 * np.sum((outputs - targets) ** 2) / outputs.shape[0])


def backprop(
    weights: list[np.ndarray], biases: list[np.ndarray], config: NetworkConfig, x: np.ndarray, y: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of the batch-mean loss, one ``(dW, db)`` per layer."""
    slopes = activation_slopes(config)
    kinds = config.activation_per_layer
    pre, acts = _forward_pass(weights, biases, config, x)
    delta = (acts[-1] - y) / x.shape[0] * activation_derivative(kinds[-1], pre[-1], **slopes)
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for layer in range(len(weights) - 1, -1, -1):
        grads.append((acts[layer].T @ delta, delta.sum(axis=0)))
        if layer > 0:
            delta = (delta @ weights[layer].T) * activation_derivative(kinds[layer - 1], pre[layer - 1], **slopes)
    grads.reverse()
    return grads


# ============================================================================
# TRAINING
# ============================================================================


def initialize_model(config: NetworkConfig, rng: np.random.Generator | None = None) -> TrainedModel:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights = [
        WeightMatrix(
            values=rng.uniform(-config.init_scale, config.init_scale, size=(sizes[i], sizes[i + 1])),
            bias=np.zeros(sizes[i + 1]),
        )
        for i in range(config.n_transitions)
    ]
    return TrainedModel(config=config, weights=weights)


def train(
    config: NetworkConfig,
    dataset: Dataset,
    *,
    log: logging.Logger | logging.LoggerAdapter | None = None,
    progress: bool = False,
) -> TrainedModel:
    """Run ``config.epochs`` passes of mini-batch gradient descent.

    Raises:
        InputError: Empty dataset, wrong feature width or out-of-range labels.
        TrainingError: The training loss became non-finite.
    """
    log = log or logger
    if dataset.n_samples == 0:
        raise InputError("Cannot train on an empty dataset")
    if dataset.n_features != config.input_size:
        raise InputError(f"Dataset has {dataset.n_features} features, network expects {config.input_size}")
    if int(dataset.labels.max()) >= config.n_classes:
        raise InputError(f"Label {int(dataset.labels.max())} exceeds output layer size {config.n_classes}")

    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    initial = initialize_model(config, rng)
    weights = [layer.values.copy() for layer in initial.weights]
    biases = [layer.bias.copy() for layer in initial.weights]
    x_all = dataset.features
    y_all = one_hot(dataset.labels, config.n_classes)

    def full_loss() -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return mean_squared_loss(_forward_pass(weights, biases, config, x_all)[1][-1], y_all)

    history = [full_loss()]
    log.info(
        f"Training {config.layer_sizes} on {dataset.name} ({dataset.n_samples} samples), "
        f"{config.epochs} epochs, lr={config.learning_rate}, batch={config.batch_size}, seed={config.seed}"
    )
    for epoch in tqdm(range(1, config.epochs + 1), desc="train", unit="epoch", disable=not progress):
        order = rng.permutation(dataset.n_samples)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, dataset.n_samples, config.batch_size):
                idx = order[start : start + config.batch_size]
                for layer, (grad_w, grad_b) in enumerate(backprop(weights, biases, config, x_all[idx], y_all[idx])):
                    weights[layer] -= config.learning_rate * grad_w
                    biases[layer] -= config.learning_rate * grad_b
        epoch_loss = full_loss()
        if not math.isfinite(epoch_loss):
            raise TrainingError("Training loss diverged to a non-finite value", epoch=epoch)
        history.append(epoch_loss)
        TRAINING_EPOCHS_TOTAL.inc()
        log.debug(f"epoch {epoch}: loss={epoch_loss:.6f}")

    duration = time.perf_counter() - started
    TRAINING_DURATION.observe(duration)
    log.info(f"Training finished in {duration:.2f}s: loss {history[0]:.6f} -> {history[-1]:.6f}")
    return TrainedModel(
        config=config,
        weights=[WeightMatrix(values=w, bias=b) for w, b in zip(weights, biases, strict=True)],
        training_loss_history=history,
    )


# ============================================================================
# GRADIENT CHECK
# ============================================================================


def gradient_check(
    model: TrainedModel,
    sample: tuple[np.ndarray, int],
    epsilon: float = 1e-5,
    *,
    gradient_fn: GradientFn | None = None,
    skip_kinks: bool = True,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every weight and bias is perturbed. With ``skip_kinks`` a parameter is
    skipped when its ±epsilon perturbation moves any pre-activation of a
    clamped activation across a kink.
    """
    if not 0 < epsilon <= 1e-2:
        raise InputError(f"epsilon must lie in (0, 1e-2], got {epsilon}")
    config = model.config
    x_raw, label = sample
    x, _ = _as_batch(model, x_raw)
    y = one_hot(np.array([label]), config.n_classes)
    weights = [layer.values.copy() for layer in model.weights]
    biases = [layer.bias.copy() for layer in model.weights]
    analytic = (gradient_fn or backprop)(weights, biases, config, x, y)

    def probe() -> tuple[float, list[np.ndarray]]:
        pre, acts = _forward_pass(weights, biases, config, x)
        regions = [_kink_region(kind, z, config) for kind, z in zip(config.activation_per_layer, pre, strict=True)]
        return mean_squared_loss(acts[-1], y), regions

    worst = 0.0
    for layer in range(len(weights)):
        for params, grad in ((weights[layer], analytic[layer][0]), (biases[layer], analytic[layer][1])):
            for index in np.ndindex(params.shape):
                original = params[index]
                params[index] = original + epsilon
                loss_plus, regions_plus = probe()
                params[index] = original - epsilon
                loss_minus, regions_minus = probe()
                params[index] = original
                if skip_kinks and any(
                    not np.array_equal(a, b) for a, b in zip(regions_plus, regions_minus, strict=True)
                ):
                    continue
                numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
                exact = float(grad[index])
                error = abs(exact - numeric) / max(abs(exact), abs(numeric), GRADIENT_CHECK_FLOOR)
                worst = max(worst, error)
    return worst


# ============================================================================
# SERIALIZATION
# ============================================================================


def model_to_document(model: TrainedModel, experiment: ExperimentConfig | None = None) -> TrainedModelDocument:
    return TrainedModelDocument(
        layer_sizes=list(model.config.layer_sizes),
        activations=model.activations,
        weights=[layer.values.ravel(order="C").tolist() for layer in model.weights],
        biases=[layer.bias.tolist() for layer in model.weights],
        seed=model.config.seed,
        training_loss_history=list(model.training_loss_history),
        network=model.config,
        experiment=experiment,
    )


def model_from_document(document: TrainedModelDocument) -> TrainedModel:
    config = document.network or NetworkConfig(
        layer_sizes=document.layer_sizes, activation_per_layer=document.activations, seed=document.seed
    )
    sizes = document.layer_sizes
    if len(document.weights) != len(sizes) - 1 or len(document.biases) != len(sizes) - 1:
        raise DataFormatError("Model document has the wrong number of layers")
    weights = []
    for index, (flat, bias) in enumerate(zip(document.weights, document.biases, strict=True)):
        if len(flat) != sizes[index] * sizes[index + 1]:
            raise DataFormatError(f"Layer {index} weight list has {len(flat)} values")
        weights.append(WeightMatrix(values=np.array(flat).reshape(sizes[index], sizes[index + 1]), bias=bias))
    return TrainedModel(config=config, weights=weights, training_loss_history=list(document.training_loss_history))


def save_model(path: Path, model: TrainedModel, experiment: ExperimentConfig | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model_to_document(model, experiment).model_dump_json(indent=2), encoding="utf-8")
    return path


def load_model(path: Path) -> tuple[TrainedModel, TrainedModelDocument]:
    if not path.is_file():
        raise DataFormatError("Model file not found", path=str(path))
    try:
        document = TrainedModelDocument.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValueError) as exc:
        raise DataFormatError(f"Model file is malformed: {exc}", path=str(path)) from exc
    return model_from_document(document), document
