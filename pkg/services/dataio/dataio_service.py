"""Dataset ingestion: MNIST IDX files, IRIS CSV, normalization and splits.

IDX Layout (big-endian)
=======================
::
    [offset] [type]          [value]            [description]
    0000     32 bit integer  0x00000803 (2051)  magic number (images)
    0004     32 bit integer  N                  number of images
    0008     32 bit integer  28                 number of rows
    0012     32 bit integer  28                 number of columns
    0016     unsigned byte   ??                 pixels, row-major

    0000     32 bit integer  0x00000801 (2049)  magic number (labels)
    0004     32 bit integer  N                  number of items
    0008     unsigned byte   ??                 labels

Gzip-compressed files are detected by their header and decompressed
transparently. Format errors name the file and the byte offset at fault.

IRIS CSV
========
``sepal_length,sepal_width,petal_length,petal_width,class``. Leading header
rows and blank lines are skipped; class names map to 0..k−1 in order of first
appearance.
"""

import csv
import gzip
import logging
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from common.enums import DatasetName
from common.exceptions import DataFormatError, InputError
from common.models import Dataset
from common.schemas import DatasetConfig

__all__ = [
    "IDX_IMAGES_MAGIC",
    "IDX_LABELS_MAGIC",
    "LoadedData",
    "find_mnist_files",
    "load_experiment_data",
    "load_iris",
    "load_mnist",
    "normalize_features",
    "one_hot",
    "read_idx",
    "split",
    "subset",
]

logger = logging.getLogger("bnnsim.dataio")

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
MNIST_CLASSES = 10
IRIS_FEATURES = 4
GZIP_MAGIC = b"\x1f\x8b"
IRIS_FILE_NAMES = ("iris.csv", "iris.data")
MNIST_FILE_STEMS = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


# ============================================================================
# MNIST (IDX)
# ============================================================================


def _read_bytes(path: Path) -> bytes:
    if not path.is_file():
        raise DataFormatError("File not found", path=str(path))
    raw = path.read_bytes()
    if raw[:2] == GZIP_MAGIC:
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError, zlib.error) as exc:
            raise DataFormatError(f"Corrupt gzip stream: {exc}", path=str(path), offset=0) from exc
    return raw


def read_idx(path: Path, expected_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX file into an array shaped by its header.

    Raises:
        DataFormatError: Missing file, wrong magic number, truncated header or
            payload, or trailing bytes after the payload.
    """
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise DataFormatError("Truncated IDX header", path=str(path), offset=len(raw))
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise DataFormatError(f"Bad magic number {magic}, expected {expected_magic}", path=str(path), offset=0)
    ndim = raw[3]
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise DataFormatError("Truncated IDX dimension header", path=str(path), offset=len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    count = math.prod(dims)
    available = len(raw) - header_end
    if available < count:
        raise DataFormatError(
            f"Truncated IDX payload: header declares {count} bytes, found {available}",
            path=str(path),
            offset=len(raw),
        )
    if available > count:
        raise DataFormatError("Trailing bytes after IDX payload", path=str(path), offset=header_end + count)
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header_end).reshape(dims)


def load_mnist(images_path: Path, labels_path: Path, *, name: str = "mnist") -> Dataset:
    """Load an MNIST image/label file pair; pixels are scaled to [0, 1]."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataFormatError(
            f"Image file must have 3 dimensions, found {images.ndim}", path=str(images_path), offset=3
        )
    if labels.shape[0] != images.shape[0]:
        raise DataFormatError(
            f"Label count {labels.shape[0]} does not match image count {images.shape[0]}",
            path=str(labels_path),
            offset=4,
        )
    if labels.size and int(labels.max()) >= MNIST_CLASSES:
        bad = int(np.argmax(labels >= MNIST_CLASSES))
        raise DataFormatError(f"Label {int(labels[bad])} out of range", path=str(labels_path), offset=8 + bad)
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    logger.info(f"Loaded {name}: {features.shape[0]} samples x {features.shape[1]} features from {images_path}")
    return Dataset(features=features, labels=labels.astype(np.int64), n_classes=MNIST_CLASSES, name=name)


def find_mnist_files(root: Path, split_name: str) -> tuple[Path, Path]:
    """Locate the standard MNIST file pair under ``root`` (plain or ``.gz``, dash or dot naming)."""
    stems = MNIST_FILE_STEMS[split_name]
    found: list[Path] = []
    for stem in stems:
        variants = (stem, stem.replace("-idx", ".idx"))
        candidates = [root / f"{variant}{suffix}" for variant in variants for suffix in ("", ".gz")]
        match = next((candidate for candidate in candidates if candidate.is_file()), None)
        if match is None:
            raise DataFormatError(f"MNIST {split_name} file '{stem}' not found", path=str(root))
        found.append(match)
    return found[0], found[1]


# ============================================================================
# IRIS (CSV)
# ============================================================================


def _parse_numeric(fields: list[str]) -> list[float] | None:
    try:
        return [float(field) for field in fields]
    except ValueError:
        return None


def load_iris(csv_path: Path) -> Dataset:
    """Load IRIS-style CSV: four numeric columns followed by a class name.

    Raises:
        DataFormatError: Missing file, wrong field count, or a non-numeric
            feature after the first data row; the message names the line.
    """
    if not csv_path.is_file():
        raise DataFormatError("IRIS file not found", path=str(csv_path))
    features: list[list[float]] = []
    names: list[str] = []
    class_index: dict[str, int] = {}
    with csv_path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        for row in reader:
            line = reader.line_num
            if not row or all(not field.strip() for field in row):
                continue
            fields = [field.strip() for field in row]
            if len(fields) != IRIS_FEATURES + 1:
                raise DataFormatError(
                    f"Expected {IRIS_FEATURES + 1} fields, found {len(fields)}", path=str(csv_path), line=line
                )
            values = _parse_numeric(fields[:IRIS_FEATURES])
            if values is None:
                if not features:
                    continue
                raise DataFormatError("Non-numeric feature value", path=str(csv_path), line=line)
            features.append(values)
            names.append(fields[IRIS_FEATURES])
            class_index.setdefault(fields[IRIS_FEATURES], len(class_index))
    if not features:
        raise DataFormatError("IRIS file contains no data rows", path=str(csv_path))
    labels = np.array([class_index[name] for name in names], dtype=np.int64)
    logger.info(f"Loaded iris: {len(features)} samples, {len(class_index)} classes from {csv_path}")
    return Dataset(features=np.array(features), labels=labels, n_classes=len(class_index), name="iris")


# ============================================================================
# TRANSFORMS
# ============================================================================


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Rows with a single 1 at each label's index."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InputError(f"Labels must lie in [0, {n_classes})")
    encoded = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


def normalize_features(dataset: Dataset) -> Dataset:
    """Per-feature min-max to [0, 1]; constant features become 0."""
    if dataset.n_samples == 0:
        return dataset
    lo = dataset.features.min(axis=0)
    span = dataset.features.max(axis=0) - lo
    scaled = np.where(span > 0, (dataset.features - lo) / np.where(span > 0, span, 1.0), 0.0)
    return Dataset(features=scaled, labels=dataset.labels, n_classes=dataset.n_classes, name=dataset.name)


def split(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then the first ``round(n·fraction)`` samples train.

    Both parts keep at least one sample when the dataset has two or more.
    """
    if not 0 < train_fraction < 1:
        raise InputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = dataset.n_samples
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(max(round(n * train_fraction), 1), n - 1) if n >= 2 else n
    return (
        dataset.take(order[:n_train], name=f"{dataset.name}-train"),
        dataset.take(order[n_train:], name=f"{dataset.name}-test"),
    )


def subset(dataset: Dataset, limit: int | None) -> Dataset:
    """First ``limit`` samples, or the dataset unchanged."""
    if limit is None or limit >= dataset.n_samples:
        return dataset
    return dataset.take(np.arange(limit))


# ============================================================================
# EXPERIMENT DATA
# ============================================================================


@dataclass(frozen=True)
class LoadedData:
    """Train/test pair plus a human-readable description of the split."""

    train: Dataset
    test: Dataset
    description: str


def _iris_path(config: DatasetConfig, data_dir: Path | None) -> Path:
    if config.iris_path is not None:
        return config.iris_path
    if data_dir is None:
        raise DataFormatError("No IRIS path configured and BNNSIM_DATA_DIR is unset")
    for name in IRIS_FILE_NAMES:
        if (data_dir / name).is_file():
            return data_dir / name
    raise DataFormatError(f"None of {', '.join(IRIS_FILE_NAMES)} found", path=str(data_dir))


def _mnist_root(config: DatasetConfig, data_dir: Path | None) -> Path:
    if config.mnist_dir is not None:
        return config.mnist_dir
    if data_dir is None:
        raise DataFormatError("No MNIST directory configured and BNNSIM_DATA_DIR is unset")
    nested = data_dir / "mnist"
    return nested if nested.is_dir() else data_dir


def load_experiment_data(config: DatasetConfig, *, seed: int, data_dir: Path | None = None) -> LoadedData:
    """Resolve, load and split the configured dataset.

    IRIS is min-max normalized over the whole file, then split with ``seed``.
    MNIST uses its official train/test files, optionally cut to the
    configured desk-scale limits.
    """
    if config.name == DatasetName.IRIS:
        dataset = load_iris(_iris_path(config, data_dir))
        if config.normalize:
            dataset = normalize_features(dataset)
        train, test = split(dataset, config.train_fraction, seed)
        pct = round(config.train_fraction * 100)
        description = f"iris seeded {pct}/{100 - pct} split (seed={seed})"
    else:
        root = _mnist_root(config, data_dir)
        train = load_mnist(*find_mnist_files(root, "train"), name="mnist-train")
        test = load_mnist(*find_mnist_files(root, "test"), name="mnist-test")
        description = "mnist official split"
    train = subset(train, config.train_limit)
    test = subset(test, config.test_limit)
    if config.train_limit is not None or config.test_limit is not None:
        description += f", subset {train.n_samples} train / {test.n_samples} test"
    else:
        description += f", {train.n_samples} train / {test.n_samples} test"
    return LoadedData(train=train, test=test, description=description)
