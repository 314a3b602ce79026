"""Shared pytest fixtures: synthetic datasets, trained models and data files."""

import struct
from collections.abc import Callable, Generator
from pathlib import Path

import numpy as np
import pytest

from apps.bnnsim.dependencies import get_service_manager
from common.models import BinaryModel, Dataset, TrainedModel
from common.schemas import DeviceModel, NetworkConfig
from services.binarizer.binarizer_service import binarize_model, derive_levels
from services.mlp.mlp_service import train

IRIS_CLASSES = ("Iris-setosa", "Iris-versicolor", "Iris-virginica")

# ============================================================================
# ENVIRONMENT
# ============================================================================


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> Generator[None, None, None]:
    """Run every test with fresh settings and no progress bars."""
    monkeypatch.delenv("BNNSIM_DATA_DIR", raising=False)
    monkeypatch.delenv("BNNSIM_OUTPUT_DIR", raising=False)
    monkeypatch.setenv("PROGRESS_BARS", "false")
    monkeypatch.chdir(tmp_path)
    get_service_manager().reset()
    yield
    get_service_manager().reset()


# ============================================================================
# DATASETS
# ============================================================================


def make_clusters(n_per_class: int, n_features: int, n_classes: int, seed: int, spread: float = 0.05) -> Dataset:
    """Well-separated Gaussian clusters inside the unit cube."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.15, 0.85, size=(n_classes, n_features))
    centers[:, 0] = np.linspace(0.1, 0.9, n_classes)
    features = np.concatenate([center + spread * rng.standard_normal((n_per_class, n_features)) for center in centers])
    labels = np.repeat(np.arange(n_classes), n_per_class)
    order = rng.permutation(labels.size)
    return Dataset(features=features[order], labels=labels[order], n_classes=n_classes, name="clusters")


@pytest.fixture
def blobs() -> Dataset:
    """Linearly separable two-class 2-D blobs."""
    return make_clusters(n_per_class=40, n_features=2, n_classes=2, seed=11)


@pytest.fixture
def iris_like() -> Dataset:
    """Three-class, four-feature data shaped like IRIS."""
    return make_clusters(n_per_class=20, n_features=4, n_classes=3, seed=5, spread=0.04)


# ============================================================================
# MODELS
# ============================================================================


@pytest.fixture
def small_config() -> NetworkConfig:
    return NetworkConfig(layer_sizes=[4, 6, 3], epochs=60, seed=3, learning_rate=0.5)


@pytest.fixture
def trained_model(small_config: NetworkConfig, iris_like: Dataset) -> TrainedModel:
    return train(small_config, iris_like)


@pytest.fixture
def device() -> DeviceModel:
    """Ideal device with the default 3 kΩ / 62 kΩ endpoints."""
    return DeviceModel()


@pytest.fixture
def binary_model(trained_model: TrainedModel, device: DeviceModel) -> BinaryModel:
    return binarize_model(trained_model, derive_levels(device.r_on, device.r_off))


# ============================================================================
# DATA FILES
# ============================================================================


def idx_bytes(magic: int, dims: tuple[int, ...], payload: bytes) -> bytes:
    """Assemble a big-endian IDX file; the low byte of ``magic`` carries the dimension count."""
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + payload


@pytest.fixture
def write_mnist(tmp_path: Path) -> Callable[..., tuple[Path, Path]]:
    """Write a fabricated MNIST pair of ``n`` images and labels."""

    def _write(
        n: int = 2, *, stem: str = "train", labels: list[int] | None = None, pixels: bytes | None = None
    ) -> tuple[Path, Path]:
        images = tmp_path / f"{stem}-images-idx3-ubyte"
        label_file = tmp_path / f"{stem}-labels-idx1-ubyte"
        images.write_bytes(idx_bytes(2051, (n, 28, 28), pixels if pixels is not None else bytes(n * 784)))
        label_values = labels if labels is not None else [i % 10 for i in range(n)]
        label_file.write_bytes(idx_bytes(2049, (n,), bytes(label_values)))
        return images, label_file

    return _write


def iris_rows(dataset: Dataset) -> list[str]:
    return [
        ",".join(f"{value:.4f}" for value in row) + f",{IRIS_CLASSES[label]}"
        for row, label in zip(dataset.features, dataset.labels, strict=True)
    ]


@pytest.fixture
def iris_csv(tmp_path: Path, iris_like: Dataset) -> Path:
    """IRIS-format CSV of the synthetic three-class data, with a header row."""
    path = tmp_path / "iris.csv"
    header = "sepal_length,sepal_width,petal_length,petal_width,class"
    path.write_text("\n".join([header, *iris_rows(iris_like)]) + "\n", encoding="utf-8")
    return path
