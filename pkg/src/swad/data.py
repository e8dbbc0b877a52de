"""Dataset ingestion and one-class experiment construction.

Supports the classic big-endian IDX image/label format (gzip transparent),
simple numeric CSV with a header, and the CIFAR-10 binary batch layout. A
one-class split keeps only normal samples for training, builds a balanced
labeled validation set from held-out normals plus abnormal draws, and
relabels the canonical test partition to binary.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import os
import struct
import urllib.request
from dataclasses import dataclass

import numpy as np

from .numerics import Rng, SwadError

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class DataError(SwadError):
    """Malformed dataset file or invalid split request."""


class DatasetUnavailableError(SwadError):
    """A benchmark dataset is neither on disk nor downloadable."""


@dataclass
class NormalizationRecord:
    """How raw feature values were transformed at load time."""

    kind: str = "none"  # none | divide
    value: float = 1.0

    def apply(self, raw: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.asarray(raw, dtype=np.float64)
        if self.kind == "divide":
            return np.asarray(raw, dtype=np.float64) / self.value
        raise DataError(f"unknown normalization kind {self.kind!r}")


@dataclass
class RawDataset:
    features: np.ndarray  # n x D float64
    class_labels: np.ndarray  # n int64
    source: str
    normalization: NormalizationRecord

    def __post_init__(self):
        if self.features.shape[0] != self.class_labels.shape[0]:
            raise DataError(
                f"{self.class_labels.shape[0]} labels for {self.features.shape[0]} rows"
            )
        if not np.all(np.isfinite(self.features)):
            raise DataError(f"non-finite feature values in {self.source}")


@dataclass
class OneClassSplit:
    train_x: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    normal_class: int
    normalization: NormalizationRecord
    train_indices: np.ndarray  # into the canonical training set
    val_normal_indices: np.ndarray
    val_abnormal_indices: np.ndarray


def _open_maybe_gzip(path):
    try:
        if str(path).endswith(".gz"):
            return gzip.open(path, "rb")
        return open(path, "rb")
    except OSError as exc:
        raise DataError(f"cannot open dataset file: {exc}") from None


def _read_be32(f, path, what) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise DataError(f"{path}: truncated while reading {what}")
    return struct.unpack(">I", raw)[0]


def load_idx(images_path, labels_path) -> RawDataset:
    """Parse IDX image/label files, flattening pixels and scaling to [0, 1]."""
    with _open_maybe_gzip(images_path) as f:
        magic = _read_be32(f, images_path, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DataError(
                f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        n = _read_be32(f, images_path, "image count")
        rows = _read_be32(f, images_path, "row count")
        cols = _read_be32(f, images_path, "column count")
        raw = f.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise DataError(
                f"{images_path}: truncated pixel data, got {len(raw)} of {n * rows * cols} bytes"
            )
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)

    with _open_maybe_gzip(labels_path) as f:
        magic = _read_be32(f, labels_path, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DataError(
                f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        n_labels = _read_be32(f, labels_path, "label count")
        raw = f.read(n_labels)
        if len(raw) != n_labels:
            raise DataError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)

    if n != n_labels:
        raise DataError(f"{images_path}: {n} images but {n_labels} labels")
    norm = NormalizationRecord("divide", 255.0)
    return RawDataset(norm.apply(pixels), labels, str(images_path), norm)


def write_idx(images_path, labels_path, pixels: np.ndarray, labels: np.ndarray,
              rows: int, cols: int) -> None:
    """Write uint8 images/labels in IDX layout (fixture and export helper)."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n = pixels.shape[0]
    if pixels.shape[1] != rows * cols:
        raise DataError(f"pixel width {pixels.shape[1]} != rows*cols {rows * cols}")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, n))
        f.write(labels.tobytes())


def load_csv(path, label_column: str) -> RawDataset:
    """Numeric CSV with a header row; the label column becomes class labels."""
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open dataset file: {exc}") from None
    with handle as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column not in header:
            raise DataError(
                f"{path}: no column {label_column!r}; available columns: {header}"
            )
        label_idx = header.index(label_column)
        features, labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no} has {len(row)} cells, header has {len(header)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: {exc}") from None
            label = values.pop(label_idx)
            if label != int(label):
                raise DataError(f"{path}: line {line_no}: non-integer label {label}")
            features.append(values)
            labels.append(int(label))
    if not features:
        raise DataError(f"{path}: no data rows")
    norm = NormalizationRecord()
    return RawDataset(np.asarray(features, dtype=np.float64),
                      np.asarray(labels, dtype=np.int64), str(path), norm)


def load_cifar10(data_dir) -> tuple[RawDataset, RawDataset]:
    """Canonical CIFAR-10 binary batches -> flattened RGB rows scaled to [0, 1]."""
    batch_dir = _find_cifar_batch_dir(data_dir)
    train_parts = [f"data_batch_{i}.bin" for i in range(1, 6)]
    train = _read_cifar_batches(batch_dir, train_parts)
    test = _read_cifar_batches(batch_dir, ["test_batch.bin"])
    return train, test


def _find_cifar_batch_dir(data_dir):
    candidates = [data_dir, os.path.join(data_dir, "cifar-10-batches-bin")]
    for cand in candidates:
        if os.path.exists(os.path.join(cand, "data_batch_1.bin")):
            return cand
    raise DataError(f"no CIFAR-10 binary batches under {data_dir}")


def _read_cifar_batches(batch_dir, names) -> RawDataset:
    record = 1 + 3072
    rows, labels = [], []
    for name in names:
        path = os.path.join(batch_dir, name)
        try:
            blob = open(path, "rb").read()
        except OSError as exc:
            raise DataError(f"cannot open dataset file: {exc}") from None
        if len(blob) % record != 0:
            raise DataError(f"{path}: size {len(blob)} is not a multiple of {record}")
        arr = np.frombuffer(blob, dtype=np.uint8).reshape(-1, record)
        labels.append(arr[:, 0].astype(np.int64))
        rows.append(arr[:, 1:])
    norm = NormalizationRecord("divide", 255.0)
    return RawDataset(norm.apply(np.concatenate(rows)), np.concatenate(labels),
                      str(batch_dir), norm)


def make_one_class_split(
    train_data: RawDataset,
    test_data: RawDataset,
    normal_class: int,
    val_fraction: float,
    rng: Rng,
) -> OneClassSplit:
    """One-class partitioning over canonical train/test datasets.

    Training keeps only normal rows minus a held-out validation slice; the
    validation set pairs that slice with an equal-count random draw of
    abnormal rows (also from the canonical training data, so the test set
    stays untouched); the test set is relabeled binary (0 normal, 1 abnormal).
    """
    if not 0.0 < val_fraction <= 0.5:
        raise DataError(f"val_fraction must be in (0, 0.5], got {val_fraction}")
    labels = train_data.class_labels
    normal_idx = np.flatnonzero(labels == normal_class)
    abnormal_idx = np.flatnonzero(labels != normal_class)
    if normal_idx.size == 0:
        raise DataError(f"normal class {normal_class} absent from training labels")
    n_val = int(np.floor(val_fraction * normal_idx.size))
    if n_val == 0:
        raise DataError(
            f"validation slice is empty: {normal_idx.size} normal rows at fraction {val_fraction}"
        )
    if abnormal_idx.size < n_val:
        raise DataError(
            f"need {n_val} abnormal validation rows, only {abnormal_idx.size} available"
        )

    norm_perm = rng.split("val-normal").permutation(normal_idx.size)
    val_norm = np.sort(normal_idx[norm_perm[:n_val]])
    train_idx = np.sort(normal_idx[norm_perm[n_val:]])
    ab_perm = rng.split("val-abnormal").permutation(abnormal_idx.size)
    val_ab = np.sort(abnormal_idx[ab_perm[:n_val]])

    val_x = np.concatenate([train_data.features[val_norm], train_data.features[val_ab]])
    val_y = np.concatenate([np.zeros(n_val, dtype=np.int64), np.ones(n_val, dtype=np.int64)])
    test_y = (test_data.class_labels != normal_class).astype(np.int64)
    if test_y.min() == test_y.max():
        raise DataError("test set does not contain both classes")

    return OneClassSplit(
        train_x=train_data.features[train_idx],
        val_x=val_x,
        val_y=val_y,
        test_x=test_data.features,
        test_y=test_y,
        normal_class=normal_class,
        normalization=train_data.normalization,
        train_indices=train_idx,
        val_normal_indices=val_norm,
        val_abnormal_indices=val_ab,
    )


def _partition_sha256(x: np.ndarray, y: np.ndarray | None = None) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    if y is not None:
        h.update(np.ascontiguousarray(y, dtype="<i8").tobytes())
    return h.hexdigest()


def write_split_manifest(path, split: OneClassSplit, seed: int, val_fraction: float) -> None:
    """Reproducibility record: seed, class, partition sizes, content hashes."""
    lines = [
        "[split]",
        f"seed = {seed}",
        f"normal_class = {split.normal_class}",
        f"val_fraction = {val_fraction!r}",
        f"normalization = {split.normalization.kind}:{split.normalization.value!r}",
        f"train_rows = {split.train_x.shape[0]}",
        f"val_rows = {split.val_x.shape[0]}",
        f"test_rows = {split.test_x.shape[0]}",
        f"train_sha256 = {_partition_sha256(split.train_x)}",
        f"val_sha256 = {_partition_sha256(split.val_x, split.val_y)}",
        f"test_sha256 = {_partition_sha256(split.test_x, split.test_y)}",
    ]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

_MNIST_MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]

_CIFAR10_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def _default_data_dir() -> str:
    return os.environ.get("SWAD_DATA_DIR", os.path.join(os.getcwd(), "data"))


def ensure_mnist(data_dir=None) -> dict[str, str]:
    """Locate (or fetch) the four canonical IDX files; returns their paths.

    Looks under ``data_dir`` (default: $SWAD_DATA_DIR or ./data), accepting
    either plain or .gz files, then tries the public mirrors. Raises
    :class:`DatasetUnavailableError` with instructions when neither works.
    """
    base = os.path.join(data_dir or _default_data_dir(), "mnist")
    paths: dict[str, str] = {}
    missing = []
    for key, name in MNIST_FILES.items():
        for cand in (os.path.join(base, name), os.path.join(base, name + ".gz")):
            if os.path.exists(cand):
                paths[key] = cand
                break
        else:
            missing.append(name)
    if not missing:
        return paths

    os.makedirs(base, exist_ok=True)
    errors = []
    for name in list(missing):
        for mirror in _MNIST_MIRRORS:
            url = mirror + name + ".gz"
            target = os.path.join(base, name + ".gz")
            try:
                urllib.request.urlretrieve(url, target)
                paths[MNIST_FILES_INV[name]] = target
                missing.remove(name)
                break
            except Exception as exc:  # noqa: BLE001 - report all mirror failures
                errors.append(f"{url}: {exc}")
    if missing:
        raise DatasetUnavailableError(
            f"MNIST files {missing} not found under {base} and download failed "
            f"({'; '.join(errors[:4])}). Place the canonical IDX files (optionally "
            f"gzipped) under {base} or set SWAD_DATA_DIR."
        )
    return paths


MNIST_FILES_INV = {name: key for key, name in MNIST_FILES.items()}


def ensure_cifar10(data_dir=None) -> str:
    """Locate (or fetch and unpack) the CIFAR-10 binary batches directory."""
    base = os.path.join(data_dir or _default_data_dir(), "cifar10")
    try:
        return _find_cifar_batch_dir(base)
    except DataError:
        pass
    os.makedirs(base, exist_ok=True)
    archive = os.path.join(base, "cifar-10-binary.tar.gz")
    try:
        if not os.path.exists(archive):
            urllib.request.urlretrieve(_CIFAR10_URL, archive)
        import tarfile

        with tarfile.open(archive) as tar:
            tar.extractall(base)
        return _find_cifar_batch_dir(base)
    except Exception as exc:
        raise DatasetUnavailableError(
            f"CIFAR-10 binary batches not found under {base} and download failed "
            f"({exc}). Unpack cifar-10-binary.tar.gz there or set SWAD_DATA_DIR."
        ) from None
