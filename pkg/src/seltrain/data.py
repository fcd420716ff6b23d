"""Dataset ingestion and per-step candidate-pool sampling.

Sources: a synthetic gaussian-mixture generator for desk-scale experiments,
a label-first CSV loader, and an IDX binary loader for the standard small
image sets.  Loaders validate eagerly and never clamp or drop rows.

Pool sampling draws the size-B candidate pool each step, either fresh
(uniform without replacement per step, the default) or by walking a per-epoch
shuffle (`policy="epoch"`).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataFormatError, DimensionError
from .numerics import Matrix, RandomStream

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

# substream tag for the per-class mean directions of the synthetic mixture;
# keyed by class index, not by run seed, so the geometry is a fixed function
# of (class, dim)
_CLASS_DIRECTION_STREAM = 0x6D6978


@dataclass(frozen=True)
class Dataset:
    features: Matrix  # (num_samples, input_dim)
    labels: np.ndarray  # (num_samples,) int64
    n_classes: int
    split: str  # "train" or "test"

    def __post_init__(self):
        f = np.ascontiguousarray(self.features, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise DimensionError("features must be a non-empty 2-D matrix")
        if lab.shape != (f.shape[0],):
            raise DimensionError(
                f"{lab.shape[0] if lab.ndim == 1 else '?'} labels for {f.shape[0]} rows"
            )
        if self.n_classes < 2:
            raise ConfigError("a dataset needs at least 2 classes")
        if lab.min() < 0 or lab.max() >= self.n_classes:
            raise DataFormatError(
                f"label out of range [0, {self.n_classes}): {lab.min()}..{lab.max()}"
            )
        if not np.isfinite(f).all():
            raise DataFormatError("features contain non-finite values")
        if self.split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {self.split!r}")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", lab)

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PoolSpec:
    """Candidate-pool shape: forward B rows per step, train on b of them."""

    pool_size: int  # B
    batch_size: int  # b
    policy: str = "fresh"  # or "epoch"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.pool_size < self.batch_size:
            raise ConfigError(
                f"pool must be >= batch ({self.pool_size} < {self.batch_size})"
            )
        if self.policy not in ("fresh", "epoch"):
            raise ConfigError(f"unknown pool policy {self.policy!r}")


def class_direction(c: int, dim: int) -> np.ndarray:
    """Fixed unit direction for class c in dim dimensions."""
    g = RandomStream(c, _CLASS_DIRECTION_STREAM).gaussian(dim)
    return g / np.sqrt(g @ g)


def gen_gaussian_mixture(
    n_classes: int,
    dim: int,
    per_class: int,
    separation: float,
    stream: RandomStream,
    split: str = "train",
) -> Dataset:
    """Balanced isotropic gaussian blobs, one per class.

    Class c is centered at ``separation * class_direction(c, dim)`` with unit
    isotropic noise; the centers are a fixed function of (class, dim) while
    the noise comes from ``stream``, so paired runs can share geometry and
    differ only in draws.
    """
    if n_classes < 2 or dim < 1 or per_class < 1:
        raise ConfigError("n_classes >= 2, dim >= 1 and per_class >= 1 required")
    if separation < 0:
        raise ConfigError(f"separation must be >= 0, got {separation}")
    n = n_classes * per_class
    noise = stream.gaussian(n * dim).reshape(n, dim)
    means = np.vstack([separation * class_direction(c, dim) for c in range(n_classes)])
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), per_class)
    features = noise + means[labels]
    return Dataset(features=features, labels=labels, n_classes=n_classes, split=split)


def _read_exact(f, n: int, path, what: str) -> bytes:
    blob = f.read(n)
    if len(blob) != n:
        raise DataFormatError(f"{path}: truncated {what} ({len(blob)}/{n} bytes)")
    return blob


def load_idx(images_path, labels_path) -> Dataset:
    """Load IDX image/label files: big-endian headers, unsigned-byte payload.

    Pixels are scaled to [0, 1] float64 and flattened row-major.  n_classes is
    taken as max(label) + 1 but never below 2.
    """
    with open(images_path, "rb") as f:
        head = _read_exact(f, 16, images_path, "image header")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad image magic 0x{magic:08x}, want 0x{IDX_IMAGE_MAGIC:08x}"
            )
        pixels = _read_exact(f, count * rows * cols, images_path, "pixel payload")
    with open(labels_path, "rb") as f:
        head = _read_exact(f, 8, labels_path, "label header")
        magic, label_count = struct.unpack(">II", head)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad label magic 0x{magic:08x}, want 0x{IDX_LABEL_MAGIC:08x}"
            )
        raw_labels = _read_exact(f, label_count, labels_path, "label payload")
    if label_count != count:
        raise DataFormatError(
            f"count mismatch: {count} images vs {label_count} labels"
        )
    features = np.frombuffer(pixels, dtype=np.uint8).astype(np.float64) / 255.0
    labels = np.frombuffer(raw_labels, dtype=np.uint8).astype(np.int64)
    n_classes = max(2, int(labels.max()) + 1) if labels.size else 2
    return Dataset(
        features=features.reshape(count, rows * cols),
        labels=labels,
        n_classes=n_classes,
        split="train",
    )


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images (count, rows, cols) and labels to IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.ndim != 3 or labels.shape != (images.shape[0],):
        raise DimensionError("images must be (count, rows, cols) with matching labels")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def load_csv(path, n_classes: int) -> Dataset:
    """Load a header-less CSV of ``label,x1,...,xD`` rows; width from row 1."""
    rows: list[list[float]] = []
    labels: list[int] = []
    width = None
    with open(path, newline="", encoding="utf-8") as f:
        for lineno, record in enumerate(csv.reader(f), start=1):
            if not record:
                continue
            if width is None:
                width = len(record) - 1
                if width < 1:
                    raise DataFormatError(f"{path}:{lineno}: no feature columns")
            elif len(record) - 1 != width:
                raise DataFormatError(
                    f"{path}:{lineno}: ragged row ({len(record) - 1} fields, want {width})"
                )
            try:
                label = int(record[0])
                values = [float(x) for x in record[1:]]
            except ValueError as e:
                raise DataFormatError(f"{path}:{lineno}: non-numeric field ({e})") from e
            if not 0 <= label < n_classes:
                raise DataFormatError(
                    f"{path}:{lineno}: label {label} out of range [0, {n_classes})"
                )
            labels.append(label)
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: empty dataset file")
    return Dataset(
        features=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=np.int64),
        n_classes=n_classes,
        split="train",
    )


def write_csv(ds: Dataset, path) -> None:
    """Write a dataset in the label-first CSV layout; floats via repr so a
    read-back is bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        for label, row in zip(ds.labels, ds.features):
            f.write(str(int(label)))
            for x in row:
                f.write("," + repr(float(x)))
            f.write("\n")


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset]:
    """Per-feature zero-mean unit-variance using train-split statistics.

    Constant features keep their mean removed and are left unscaled.
    """
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return (
        replace(train, features=(train.features - mean) / std),
        replace(test, features=(test.features - mean) / std),
    )


def draw_pool(ds: Dataset, spec: PoolSpec, stream: RandomStream) -> np.ndarray:
    """Fresh uniform without-replacement draw of B sample indices."""
    if spec.pool_size > ds.num_samples:
        raise ConfigError(
            f"pool size {spec.pool_size} exceeds dataset size {ds.num_samples}"
        )
    return stream.sample_without_replacement(ds.num_samples, spec.pool_size)


class PoolSampler:
    """Per-step pool source honoring the configured policy.

    ``fresh`` redraws B indices uniformly without replacement each step;
    ``epoch`` shuffles once, hands out consecutive B-slices and reshuffles
    when fewer than B remain.
    """

    def __init__(self, ds: Dataset, spec: PoolSpec, stream: RandomStream):
        if spec.pool_size > ds.num_samples:
            raise ConfigError(
                f"pool size {spec.pool_size} exceeds dataset size {ds.num_samples}"
            )
        self._ds = ds
        self._spec = spec
        self._stream = stream
        self._order: np.ndarray | None = None
        self._cursor = 0

    def next_pool(self) -> np.ndarray:
        if self._spec.policy == "fresh":
            return draw_pool(self._ds, self._spec, self._stream)
        n = self._ds.num_samples
        if self._order is None or self._cursor + self._spec.pool_size > n:
            self._order = self._stream.permutation(n)
            self._cursor = 0
        pool = self._order[self._cursor : self._cursor + self._spec.pool_size].copy()
        self._cursor += self._spec.pool_size
        return pool
