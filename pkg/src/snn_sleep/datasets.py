"""MNIST-family IDX loading, the geometric toy dataset and balanced splits."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import resize_batch

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
DATA_ENV = "SNN_SLEEP_DATA"
MNIST_FAMILY = ("mnist", "fmnist", "kmnist", "notmnist")
GEOMETRIC_CLASSES = ("triangle", "circle", "square", "cross")


class DataFormatError(ValueError):
    pass


class DataLengthError(DataFormatError):
    pass


class DataConsistencyError(DataFormatError):
    pass


class CapacityError(ValueError):
    """Not enough samples of some class to fill the requested split."""


@dataclass
class LabeledImageSet:
    images: np.ndarray  # (N, H, W), values in [0, 1]
    labels: np.ndarray  # (N,), ints in [0, class_count)
    class_count: int

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DataConsistencyError("images and labels differ in length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataConsistencyError("label outside [0, class_count)")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledImageSet":
        return LabeledImageSet(self.images[idx], self.labels[idx], self.class_count)

    def resized(self, dims=(15, 15)) -> "LabeledImageSet":
        if self.images.shape[1:] == tuple(dims):
            return self
        return LabeledImageSet(resize_batch(self.images, dims), self.labels, self.class_count)

    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)


# -- IDX ------------------------------------------------------------------------

def _read(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def read_idx_images(path) -> np.ndarray:
    """Raw uint8 array of shape (N, rows, cols)."""
    buf = _read(path)
    if len(buf) < 16:
        raise DataLengthError(f"{path}: header truncated")
    magic, n, rows, cols = struct.unpack(">IIII", buf[:16])
    if magic != IMAGES_MAGIC:
        raise DataFormatError(f"{path}: bad image magic 0x{magic:08x}")
    need = n * rows * cols
    if len(buf) - 16 < need:
        raise DataLengthError(f"{path}: header promises {n} images, payload is short")
    return np.frombuffer(buf, dtype=np.uint8, count=need, offset=16).reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    buf = _read(path)
    if len(buf) < 8:
        raise DataLengthError(f"{path}: header truncated")
    magic, n = struct.unpack(">II", buf[:8])
    if magic != LABELS_MAGIC:
        raise DataFormatError(f"{path}: bad label magic 0x{magic:08x}")
    if len(buf) - 8 < n:
        raise DataLengthError(f"{path}: header promises {n} labels, payload is short")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=8).copy()


def load_idx(images_path, labels_path, class_count: int = 10) -> LabeledImageSet:
    raw = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(raw) != len(labels):
        raise DataConsistencyError(f"{len(raw)} images but {len(labels)} labels")
    if labels.size and labels.max() >= class_count:
        raise DataConsistencyError(f"label {labels.max()} >= class_count {class_count}")
    return LabeledImageSet(raw.astype(np.float32) / 255.0, labels, class_count)


def write_idx(dataset: LabeledImageSet, images_path, labels_path):
    imgs = np.clip(np.rint(np.asarray(dataset.images) * 255.0), 0, 255).astype(np.uint8)
    n, rows, cols = imgs.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols))
        f.write(imgs.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", LABELS_MAGIC, n))
        f.write(dataset.labels.astype(np.uint8).tobytes())


# -- geometric toy set ------------------------------------------------------------

def _segment_distance(py, px, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    t = ((py - a[0]) * d[0] + (px - a[1]) * d[1]) / (d @ d)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(py - (a[0] + t * d[0]), px - (a[1] + t * d[1]))


def _stroke(segments, dims, half_width=1.0):
    py, px = np.mgrid[0:dims[0], 0:dims[1]].astype(float)
    dist = np.min([_segment_distance(py, px, a, b) for a, b in segments], axis=0)
    return (dist <= half_width).astype(float)


def geometric_templates(dims=(15, 15)) -> np.ndarray:
    """Outline triangle, circle, square and cross with a ~2 px stroke.

    Coordinates are (row, col) on a 15x15 grid, scaled for other sizes.
    """
    h, w = dims
    sy, sx = (h - 1) / 14.0, (w - 1) / 14.0

    def pt(r, c):
        return (r * sy, c * sx)

    tri = [(pt(2, 7), pt(12, 2)), (pt(12, 2), pt(12, 12)), (pt(12, 12), pt(2, 7))]
    sq = [(pt(3, 3), pt(3, 11)), (pt(3, 11), pt(11, 11)),
          (pt(11, 11), pt(11, 3)), (pt(11, 3), pt(3, 3))]
    cross = [(pt(2, 2), pt(12, 12)), (pt(2, 12), pt(12, 2))]

    py, px = np.mgrid[0:h, 0:w].astype(float)
    radius = 5.0 * min(sy, sx)
    circle = (np.abs(np.hypot(py - 7 * sy, px - 7 * sx) - radius) <= 1.0).astype(float)
    return np.stack([_stroke(tri, dims), circle, _stroke(sq, dims), _stroke(cross, dims)])


def generate_geometric(n_total: int = 7100, noise_var: float = 0.02, dims=(15, 15),
                       rng: np.random.Generator | None = None) -> LabeledImageSet:
    """Class-balanced noisy copies of the four templates, clipped to [0, 1]."""
    rng = np.random.default_rng(0) if rng is None else rng
    templates = geometric_templates(dims)
    k = len(templates)
    labels = np.arange(n_total) % k
    rng.shuffle(labels)
    images = templates[labels]
    if noise_var > 0:
        images = images + rng.normal(0.0, np.sqrt(noise_var), images.shape)
    return LabeledImageSet(np.clip(images, 0.0, 1.0), labels, k)


# -- splits -------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitPlan:
    n_train: int = 6000
    n_val: int = 100
    n_test: int = 1000
    batch_size: int = 400
    n_batches: int = 15
    balance: bool = True

    def __post_init__(self):
        if self.batch_size * self.n_batches != self.n_train:
            raise ValueError("batch_size * n_batches must equal n_train")


@dataclass
class Splits:
    train: LabeledImageSet  # ordered batch after batch
    val: LabeledImageSet
    test: LabeledImageSet
    plan: SplitPlan

    def batches(self):
        b = self.plan.batch_size
        for k in range(self.plan.n_batches):
            yield self.train.subset(slice(k * b, (k + 1) * b))

    def resized(self, dims) -> "Splits":
        return Splits(self.train.resized(dims), self.val.resized(dims),
                      self.test.resized(dims), self.plan)


def _balanced_counts(n, k, rng):
    counts = np.full(k, n // k)
    counts[rng.permutation(k)[: n % k]] += 1
    return counts


def balanced_split(dataset: LabeledImageSet, plan: SplitPlan, seed: int,
                   test_pool: LabeledImageSet | None = None):
    """Disjoint class-balanced (train, val, test) draws.

    Train is arranged as ``n_batches`` consecutive batches, each with per-class
    counts differing by at most one.  Test comes from ``test_pool`` when given,
    otherwise from the remainder of ``dataset``.
    """
    rng = np.random.default_rng(seed)
    k = dataset.class_count
    pools = [list(rng.permutation(np.flatnonzero(dataset.labels == c))) for c in range(k)]

    def take(pools, counts, what):
        out = []
        for c, n in enumerate(counts):
            if len(pools[c]) < n:
                raise CapacityError(f"class {c}: need {n} more samples for {what}, "
                                    f"{len(pools[c])} left")
            out.extend(pools[c][:n])
            del pools[c][:n]
        return np.array(out, dtype=np.int64)

    if plan.balance:
        batch_idx = []
        for _ in range(plan.n_batches):
            idx = take(pools, _balanced_counts(plan.batch_size, k, rng), "train")
            batch_idx.append(rng.permutation(idx))
        train_idx = np.concatenate(batch_idx)
        val_idx = rng.permutation(take(pools, _balanced_counts(plan.n_val, k, rng), "val"))
    else:
        rest = rng.permutation(np.concatenate([np.array(p, dtype=np.int64) for p in pools]))
        if rest.size < plan.n_train + plan.n_val:
            raise CapacityError("dataset too small for the split plan")
        train_idx, val_idx = rest[: plan.n_train], rest[plan.n_train: plan.n_train + plan.n_val]
        used = set(train_idx) | set(val_idx)
        pools = [[i for i in p if i not in used] for p in pools]

    if test_pool is None:
        test_idx = rng.permutation(take(pools, _balanced_counts(plan.n_test, k, rng), "test"))
        test = dataset.subset(test_idx)
    else:
        tp = [list(rng.permutation(np.flatnonzero(test_pool.labels == c))) for c in range(k)]
        test_idx = rng.permutation(take(tp, _balanced_counts(plan.n_test, k, rng), "test"))
        test = test_pool.subset(test_idx)
    return Splits(dataset.subset(train_idx), dataset.subset(val_idx), test, plan)


# -- dataset discovery ------------------------------------------------------------------

def dataset_root(root=None) -> Path:
    return Path(root or os.environ.get(DATA_ENV, "data"))


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"),
                 stem.replace("-idx", ".idx") + ".gz"):
        p = directory / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{directory / stem}[.gz] not found")


def load_dataset(name: str, root=None):
    """Return ``(pool, test_pool)``; ``test_pool`` is None for the geometric set."""
    directory = dataset_root(root) / name
    if name == "geometric":
        try:
            pool = load_idx(_find(directory, "geometric-images-idx3-ubyte"),
                            _find(directory, "geometric-labels-idx1-ubyte"), class_count=4)
        except FileNotFoundError:
            pool = generate_geometric()
        return pool, None
    if name not in MNIST_FAMILY:
        raise ValueError(f"unknown dataset {name!r}")
    train = load_idx(_find(directory, "train-images-idx3-ubyte"),
                     _find(directory, "train-labels-idx1-ubyte"))
    test = load_idx(_find(directory, "t10k-images-idx3-ubyte"),
                    _find(directory, "t10k-labels-idx1-ubyte"))
    return train, test
