"""Synthetic 2D benchmarks, MNIST IDX loading and deterministic splits."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

IMAGE_MAGIC = 2051
LABEL_MAGIC = 2049
MNIST_SIDE = 28
PADDED_DIM = 1024

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


class IdxFormatError(ValueError):
    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.offset = offset


class LabeledExample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (n, d) with integer labels ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"inconsistent dataset shapes {X.shape} / {y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.y.size

    def __iter__(self) -> Iterator[LabeledExample]:
        for x, label in zip(self.X, self.y):
            yield LabeledExample(x, int(label))

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(not 0 <= f <= 1 for f in self.fractions):
            raise ValueError("need three fractions in [0, 1]")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _check_even(n: int) -> None:
    if n < 2 or n % 2:
        raise ValueError(f"sample count must be even and >= 2, got {n}")


# ---------------------------------------------------------------------------
# 2D generators
# ---------------------------------------------------------------------------

def make_blobs(n: int, seed=None, std: float = 1.0, box: float = 10.0) -> Dataset:
    """Two isotropic Gaussian clusters around centres drawn uniformly in the box."""
    _check_even(n)
    rng = _rng(seed)
    centers = rng.uniform(-box, box, size=(2, 2))
    half = n // 2
    X = np.concatenate([centers[c] + std * rng.standard_normal((half, 2)) for c in (0, 1)])
    y = np.repeat([0, 1], half)
    return Dataset(X, y)


def make_moons(n: int, noise_std: float = 0.1, seed=None) -> Dataset:
    """Two interleaving half circles."""
    _check_even(n)
    if noise_std < 0:
        raise ValueError("noise must be non-negative")
    rng = _rng(seed)
    t = np.linspace(0.0, np.pi, n // 2)
    outer = np.column_stack([np.cos(t), np.sin(t)])
    inner = np.column_stack([1.0 - np.cos(t), 1.0 - np.sin(t) - 0.5])
    X = np.concatenate([outer, inner])
    if noise_std > 0:
        X = X + noise_std * rng.standard_normal(X.shape)
    return Dataset(X, np.repeat([0, 1], n // 2))


def make_circles(n: int, factor: float = 0.5, noise_std: float = 0.05, seed=None) -> Dataset:
    """Unit circle (class 0) around a concentric circle of radius ``factor`` (class 1)."""
    _check_even(n)
    if not 0 < factor < 1:
        raise ValueError("factor must lie in (0, 1)")
    if noise_std < 0:
        raise ValueError("noise must be non-negative")
    rng = _rng(seed)
    t = np.linspace(0.0, 2 * np.pi, n // 2, endpoint=False)
    ring = np.column_stack([np.cos(t), np.sin(t)])
    X = np.concatenate([ring, factor * ring])
    if noise_std > 0:
        X = X + noise_std * rng.standard_normal(X.shape)
    return Dataset(X, np.repeat([0, 1], n // 2))


GENERATORS = {
    "blobs": lambda n, seed: make_blobs(n, seed=seed),
    "moons": lambda n, seed: make_moons(n, seed=seed),
    "circles": lambda n, seed: make_circles(n, seed=seed),
}


def write_csv(dataset: Dataset, path_or_file) -> None:
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "label"])
        for (x1, x2), label in zip(dataset.X, dataset.y):
            w.writerow([repr(float(x1)), repr(float(x2)), int(label)])
    finally:
        if own:
            fh.close()


def read_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    X = np.array([[float(r["x1"]), float(r["x2"])] for r in rows])
    y = np.array([int(r["label"]) for r in rows])
    return Dataset(X, y)


# ---------------------------------------------------------------------------
# MNIST
# ---------------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _header(raw: bytes, path, n_fields: int, magic: int) -> tuple[int, ...]:
    size = 4 * n_fields
    if len(raw) < size:
        raise IdxFormatError(path, len(raw), f"truncated header, need {size} bytes")
    fields = struct.unpack(f">{n_fields}I", raw[:size])
    if fields[0] != magic:
        raise IdxFormatError(path, 0, f"bad magic {fields[0]:#010x}, expected {magic}")
    return fields[1:]


def read_idx_images(path) -> np.ndarray:
    raw = _read_bytes(path)
    count, rows, cols = _header(raw, path, 4, IMAGE_MAGIC)
    if (rows, cols) != (MNIST_SIDE, MNIST_SIDE):
        raise IdxFormatError(path, 8, f"image dims {rows}x{cols}, expected 28x28")
    need = 16 + count * rows * cols
    if len(raw) < need:
        raise IdxFormatError(path, len(raw), f"truncated pixel data, need {need} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _header(raw, path, 2, LABEL_MAGIC)
    if len(raw) < 8 + count:
        raise IdxFormatError(path, len(raw), f"truncated label data, need {8 + count} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=8).copy()


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8).reshape(-1, MNIST_SIDE * MNIST_SIDE)
    header = struct.pack(">4I", IMAGE_MAGIC, images.shape[0], MNIST_SIDE, MNIST_SIDE)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8).ravel()
    Path(path).write_bytes(struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.tobytes())


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Load an image/label IDX pair; pixels scaled to [0, 1], labels 0-9."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if images.shape[0] != labels.size:
        raise IdxFormatError(labels_path, 4, f"{labels.size} labels for {images.shape[0]} images")
    return Dataset(images / 255.0, labels)


def find_mnist_files(directory) -> dict[str, Path]:
    """Locate the four canonical MNIST files (optionally ``.gz``) in ``directory``."""
    directory = Path(directory)
    found = {}
    for key, stem in MNIST_FILES.items():
        for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
            if (directory / name).exists():
                found[key] = directory / name
                break
        else:
            raise FileNotFoundError(f"{directory}: missing {stem}")
    return found


def filter_binary_and_pad(dataset: Dataset, classes=(0, 1), dim: int = PADDED_DIM) -> Dataset:
    keep = np.isin(dataset.y, classes)
    X = dataset.X[keep]
    if X.shape[1] > dim:
        raise ValueError(f"{X.shape[1]} features do not fit in {dim}")
    X = np.pad(X, ((0, 0), (0, dim - X.shape[1])))
    return Dataset(X, dataset.y[keep])


def load_digits01() -> Dataset:
    """The 8x8 scikit-learn digits restricted to 0 and 1, pixels scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    keep = bunch.target <= 1
    return Dataset(bunch.data[keep] / 16.0, bunch.target[keep])


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def split(dataset: Dataset, spec: SplitSpec = SplitSpec(), rng=None) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle then contiguous (train, validate, test) partition.

    Validation and test sizes are floored; the remainder goes to train.
    """
    n = len(dataset)
    order = _rng(spec.seed if rng is None else rng).permutation(n)
    n_val = math.floor(spec.fractions[1] * n + 1e-9)
    n_test = math.floor(spec.fractions[2] * n + 1e-9)
    n_train = n - n_val - n_test
    parts = np.split(order, [n_train, n_train + n_val])
    return tuple(dataset.subset(p) for p in parts)
