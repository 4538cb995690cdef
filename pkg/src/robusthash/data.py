"""Dataset container, synthetic benchmark generation, and file I/O.

Samples are feature vectors in [0, 1]^d with multi-hot labels, tagged into
disjoint train/query/database splits. The synthetic generator places one
prototype per class on mutually orthogonal directions around the feature
space center and draws samples as prototype + Gaussian noise, which gives
a controllable desk-scale stand-in for image-feature corpora.

Each class direction mixes a dense component, spread over most feature
dimensions, with a small per-class sparse component. Under an L-infinity
perturbation budget the attacker's leverage along a direction grows with
its L1 mass, so the dense component is highly attackable while the sparse
one is nearly immune. Models fit the (stronger) dense signal first, which
mirrors the situation with real image features: standard training yields
accurate but fragile models, and robustness requires deliberately shifting
weight onto the less predictive, hard-to-perturb structure.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

DATASET_MAGIC = b"RHD1"
DATASET_VERSION = 1

SPLIT_NAMES = ("train", "query", "database")


class DataError(ValueError):
    pass


@dataclass
class SynthSpec:
    n_classes: int = 8
    per_class: int = 250
    dim: int = 320
    separation: float = 0.5
    noise: float = 0.07
    multi_label_rate: float = 0.0
    query_frac: float = 0.10
    train_frac: float = 0.20  # remainder is the database split

    def __post_init__(self):
        if self.n_classes < 2 or self.per_class < 1 or self.dim < 1:
            raise DataError("need >= 2 classes, >= 1 sample per class, dim >= 1")
        if self.separation <= 0 or self.noise < 0:
            raise DataError("separation must be positive and noise non-negative")
        if not 0.0 <= self.multi_label_rate < 1.0:
            raise DataError("multi_label_rate must lie in [0, 1)")
        if self.query_frac + self.train_frac >= 1.0:
            raise DataError("query and train fractions must leave room for database")


@dataclass
class Dataset:
    features: np.ndarray  # (N, d) float64 in [0, 1]
    labels: np.ndarray  # (N, C) uint8 multi-hot
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError("features and labels misaligned")

    @property
    def size(self):
        return self.features.shape[0]

    def split(self, name):
        idx = self.splits[name]
        return self.features[idx], self.labels[idx]


def validate_dataset(ds: Dataset):
    if not np.isfinite(ds.features).all():
        bad = int(np.argwhere(~np.isfinite(ds.features).all(axis=1))[0, 0])
        raise DataError(f"non-finite feature at sample {bad}")
    if ds.features.min() < 0.0 or ds.features.max() > 1.0:
        raise DataError("features must lie in [0, 1]")
    label_sums = ds.labels.sum(axis=1)
    if (label_sums == 0).any():
        bad = int(np.argmax(label_sums == 0))
        raise DataError(f"sample {bad} has an all-zero label vector")
    seen = np.concatenate([ds.splits.get(name, np.empty(0, int))
                           for name in SPLIT_NAMES])
    if seen.size != np.unique(seen).size:
        raise DataError("splits overlap")


def make_splits(n, query_frac, train_frac, rng):
    order = rng.permutation(n)
    n_query = int(round(n * query_frac))
    n_train = int(round(n * train_frac))
    return {
        "query": np.sort(order[:n_query]),
        "train": np.sort(order[n_query : n_query + n_train]),
        "database": np.sort(order[n_query + n_train :]),
    }


# Fraction of each class direction's length carried by its single sparse
# coordinate; the remainder is dense. Chosen so the dense part dominates
# training while the sparse part stays useful after perturbation.
SPARSE_WEIGHT = 0.6


def _class_directions(dim, n_classes, rng):
    """Orthonormal class directions: one sparse coordinate + dense remainder.

    Falls back to fully dense directions when the feature space is too small
    to reserve a private coordinate per class.
    """
    if dim < 2 * n_classes:
        gauss = rng.standard_normal((dim, n_classes))
        q, _ = np.linalg.qr(gauss)
        return q.T
    beta = SPARSE_WEIGHT
    gauss = rng.standard_normal((dim - n_classes, n_classes))
    q, _ = np.linalg.qr(gauss)
    directions = np.zeros((n_classes, dim))
    for c in range(n_classes):
        directions[c, c] = beta
        directions[c, n_classes:] = np.sqrt(1.0 - beta**2) * q[:, c]
    return directions


def generate_synthetic(spec: SynthSpec, seed) -> Dataset:
    if spec.dim < spec.n_classes:
        raise DataError(
            f"dim {spec.dim} too small for {spec.n_classes} orthogonal prototypes"
        )
    rng = np.random.default_rng(seed)
    # orthonormal class directions -> prototypes equidistant around 0.5
    prototypes = 0.5 + spec.separation * _class_directions(
        spec.dim, spec.n_classes, rng
    )
    n = spec.n_classes * spec.per_class
    features = np.empty((n, spec.dim))
    labels = np.zeros((n, spec.n_classes), dtype=np.uint8)
    classes = np.repeat(np.arange(spec.n_classes), spec.per_class)
    for i, c in enumerate(classes):
        center = prototypes[c]
        labels[i, c] = 1
        if spec.multi_label_rate > 0 and rng.random() < spec.multi_label_rate:
            other = int(rng.integers(spec.n_classes - 1))
            other = other if other < c else other + 1
            center = 0.5 * (prototypes[c] + prototypes[other])
            labels[i, other] = 1
        features[i] = center + spec.noise * rng.standard_normal(spec.dim)
    np.clip(features, 0.0, 1.0, out=features)
    ds = Dataset(features, labels,
                 make_splits(n, spec.query_frac, spec.train_frac, rng))
    validate_dataset(ds)
    return ds


def save_dataset(ds: Dataset, path):
    """Versioned binary: header, f64 features, packed labels, split tags."""
    validate_dataset(ds)
    n, d = ds.features.shape
    c = ds.labels.shape[1]
    tags = np.full(n, 255, dtype=np.uint8)
    for tag, name in enumerate(SPLIT_NAMES):
        tags[ds.splits.get(name, np.empty(0, int))] = tag
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIII", DATASET_VERSION, n, d, c))
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
        fh.write(np.packbits(ds.labels, axis=1).tobytes())
        fh.write(tags.tobytes())


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != DATASET_MAGIC:
            raise DataError(f"bad magic {magic!r} at offset 0 in {path}")
        header = fh.read(16)
        if len(header) != 16:
            raise DataError(f"truncated header at offset 4 in {path}")
        version, n, d, c = struct.unpack("<IIII", header)
        if version != DATASET_VERSION:
            raise DataError(f"unsupported dataset version {version}")
        fbytes = fh.read(8 * n * d)
        if len(fbytes) != 8 * n * d:
            raise DataError(f"truncated features at offset {20 + len(fbytes)}")
        label_width = (c + 7) // 8
        lbytes = fh.read(n * label_width)
        if len(lbytes) != n * label_width:
            raise DataError(f"truncated labels in {path}")
        tbytes = fh.read(n)
        if len(tbytes) != n:
            raise DataError(f"truncated split tags in {path}")
    features = np.frombuffer(fbytes, dtype="<f8").reshape(n, d).copy()
    packed = np.frombuffer(lbytes, dtype=np.uint8).reshape(n, label_width)
    labels = np.unpackbits(packed, axis=1)[:, :c]
    tags = np.frombuffer(tbytes, dtype=np.uint8)
    splits = {name: np.flatnonzero(tags == tag)
              for tag, name in enumerate(SPLIT_NAMES)}
    ds = Dataset(features, labels, splits)
    validate_dataset(ds)
    return ds


def export_csv(ds: Dataset, path):
    """One row per sample: d floats then C label bits (splits not included)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([f"{v:.17g}" for v in x] + [int(b) for b in y])


def import_csv(path, n_features, query_frac=0.10, train_frac=0.20, seed=0):
    """Read a CSV exported by export_csv; splits are re-drawn from the seed."""
    features, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if len(row) <= n_features:
                raise DataError(f"line {lineno}: expected > {n_features} columns")
            try:
                x = [float(v) for v in row[:n_features]]
                y = [int(v) for v in row[n_features:]]
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from exc
            if any(b not in (0, 1) for b in y):
                raise DataError(f"line {lineno}: label bits must be 0 or 1")
            features.append(x)
            labels.append(y)
    if not features:
        raise DataError("CSV file contains no samples")
    features = np.asarray(features)
    labels = np.asarray(labels, dtype=np.uint8)
    rng = np.random.default_rng(seed)
    ds = Dataset(features, labels,
                 make_splits(features.shape[0], query_frac, train_frac, rng))
    validate_dataset(ds)
    return ds
