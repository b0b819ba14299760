"""Datasets: a seeded synthetic generator plus CSV and IDX (MNIST-format) loaders."""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ConfigError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DEFAULT_SPLIT = (0.8, 0.1, 0.1)


class DataFormatError(ValueError):
    pass


class IdxMagicError(DataFormatError):
    pass


class IdxTruncatedError(DataFormatError):
    pass


class IdxCountMismatchError(DataFormatError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Features, dense integer labels and disjoint train/val/test index sets.

    ``train_x`` and friends return the (optionally standardized) rows of each
    split; sample ids inside the training loop are positions within ``train``.
    """

    features: np.ndarray
    labels: np.ndarray
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    num_classes: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise DataFormatError(f"features {x.shape} and labels {y.shape} do not align")
        if not np.all(np.isfinite(x)):
            raise DataFormatError("features must be finite")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataFormatError("labels outside [0, num_classes)")
        splits = [np.asarray(s, dtype=np.int64) for s in (self.train, self.val, self.test)]
        allidx = np.concatenate(splits)
        if allidx.size and (allidx.min() < 0 or allidx.max() >= len(y)):
            raise DataFormatError("split index out of range")
        if np.unique(allidx).size != allidx.size:
            raise DataFormatError("splits overlap")
        if splits[0].size == 0:
            raise DataFormatError("train split is empty")
        missing = set(range(self.num_classes)) - set(np.unique(y[splits[0]]).tolist())
        if missing:
            raise DataFormatError(f"classes {sorted(missing)} absent from train split")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        for name, s in zip(("train", "val", "test"), splits):
            object.__setattr__(self, name, s)

    @property
    def n(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def standardized(self):
        """Copy with features scaled to zero mean / unit variance on the train split."""
        tr = self.features[self.train]
        mu = tr.mean(axis=0)
        sd = tr.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        meta = dict(self.metadata, standardized=True)
        return Dataset((self.features - mu) / sd, self.labels, self.train, self.val, self.test,
                       self.num_classes, meta)

    def split(self, name):
        idx = getattr(self, name)
        return self.features[idx], self.labels[idx]

    def save_metadata(self, path):
        with open(path, "w") as fh:
            json.dump(self.metadata, fh, indent=2, sort_keys=True)

    def save_csv(self, path):
        """Write the dataset with a ``split`` column so ``load_csv`` restores it."""
        split_of = np.empty(self.n, dtype=object)
        for name in ("train", "val", "test"):
            split_of[getattr(self, name)] = name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "split"] + [f"x{j}" for j in range(self.dim)])
            for i in range(self.n):
                if split_of[i] is None:
                    continue
                w.writerow([int(self.labels[i]), split_of[i]] + [repr(float(v)) for v in self.features[i]])


def _split_indices(n, split, rng):
    """Seeded permutation cut into train/val/test by fractions or exact counts."""
    split = tuple(split)
    if len(split) != 3:
        raise ConfigError("data.split", "needs three entries (train, val, test)")
    if all(isinstance(s, (int, np.integer)) and not isinstance(s, bool) for s in split) and sum(split) > 3:
        counts = [int(s) for s in split]
        if sum(counts) != n:
            raise ConfigError("data.split", f"split counts sum to {sum(counts)}, dataset has {n} rows")
    else:
        if any(s < 0 for s in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigError("data.split", "fractions must be non-negative and sum to 1")
        n_train = int(round(split[0] * n))
        n_val = int(round(split[1] * n))
        counts = [n_train, n_val, n - n_train - n_val]
    perm = rng.permutation(n)
    a, b = counts[0], counts[0] + counts[1]
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])


def generate_synthetic(classes=10, per_class=100, dims=32, overlap=1.0, label_noise=0.0, seed=0,
                       split=DEFAULT_SPLIT, standardize=True):
    """Gaussian class clusters with a planted fraction of flipped labels.

    Class means are random unit directions scaled to radius 3, so ``overlap``
    (the within-class standard deviation) alone controls how much clusters
    mix; ``overlap=0`` puts every sample on its class mean. Exactly
    ``floor(label_noise * n)`` samples get a different, uniformly chosen
    label; their ids are listed in ``metadata["flipped"]``.
    """
    if classes < 2:
        raise ConfigError("data.classes", "need at least 2 classes")
    if dims < 1:
        raise ConfigError("data.dims", "must be >= 1")
    if overlap < 0:
        raise ConfigError("data.overlap", "must be >= 0")
    if not 0.0 <= label_noise < 0.5:
        raise ConfigError("data.label_noise", "must be in [0, 0.5)")
    counts = [int(per_class)] * classes if np.isscalar(per_class) else [int(c) for c in per_class]
    if len(counts) != classes or min(counts) < 1:
        raise ConfigError("data.per_class", "need one positive count per class")

    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, dims))
    means *= 3.0 / np.linalg.norm(means, axis=1, keepdims=True)
    clean = np.repeat(np.arange(classes), counts)
    n = clean.size
    x = means[clean] + overlap * rng.normal(size=(n, dims))

    labels = clean.copy()
    n_flip = int(np.floor(label_noise * n))
    flipped = np.sort(rng.choice(n, size=n_flip, replace=False)) if n_flip else np.zeros(0, dtype=np.int64)
    shift = rng.integers(1, classes, size=n_flip)
    labels[flipped] = (clean[flipped] + shift) % classes

    train, val, test = _split_indices(n, split, rng)
    meta = {
        "source": "synthetic",
        "classes": classes,
        "per_class": counts,
        "dims": dims,
        "overlap": overlap,
        "label_noise": label_noise,
        "seed": seed,
        "flipped": flipped.tolist(),
    }
    ds = Dataset(x, labels, train, val, test, classes, meta)
    return ds.standardized() if standardize else ds


def _remap_labels(raw):
    values = sorted(set(raw))
    if len(values) < 1:
        raise DataFormatError("no labels found")
    try:
        numeric = sorted(values, key=float)
    except ValueError:
        numeric = values
    mapping = {v: i for i, v in enumerate(numeric)}
    return np.array([mapping[v] for v in raw], dtype=np.int64), {str(v): i for v, i in mapping.items()}


def load_csv(path, label_column="label", feature_columns=None, split_column="split", seed=0,
             split=DEFAULT_SPLIT, standardize=True):
    """Read a headered CSV of numeric features and a label column.

    Raw labels are sorted (numerically where possible) and remapped to
    ``0..K-1``; the mapping is kept in ``metadata["label_map"]``. When a
    ``split`` column with values train/val/test is present it defines the
    splits, otherwise a seeded split is drawn.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    if label_column not in header:
        raise DataFormatError(f"{path}: no label column {label_column!r}")
    has_split = split_column in header
    if feature_columns is None:
        feature_columns = [c for c in header if c not in (label_column, split_column)]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise DataFormatError(f"{path}: missing feature columns {missing}")
    col = {c: j for j, c in enumerate(header)}

    x = np.empty((len(rows), len(feature_columns)))
    raw_labels, split_of = [], []
    for r, row in enumerate(rows):
        line = r + 2
        if len(row) != len(header):
            raise DataFormatError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
        for j, c in enumerate(feature_columns):
            try:
                x[r, j] = float(row[col[c]])
            except ValueError:
                raise DataFormatError(f"{path}: line {line}, column {c!r}: not a number: {row[col[c]]!r}") from None
        raw_labels.append(row[col[label_column]].strip())
        if has_split:
            split_of.append(row[col[split_column]].strip())
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    labels, mapping = _remap_labels(raw_labels)
    if has_split:
        split_of = np.array(split_of)
        bad = sorted(set(split_of) - {"train", "val", "test"})
        if bad:
            raise DataFormatError(f"{path}: unknown split values {bad}")
        train, val, test = (np.flatnonzero(split_of == s) for s in ("train", "val", "test"))
    else:
        train, val, test = _split_indices(len(rows), split, np.random.default_rng(seed))
    meta = {"source": "csv", "path": str(path), "label_map": mapping, "seed": seed}
    try:
        ds = Dataset(x, labels, train, val, test, len(mapping), meta)
    except DataFormatError as exc:
        raise DataFormatError(f"{exc}; raw label values: {sorted(mapping)}") from None
    return ds.standardized() if standardize else ds


def _read_idx(path, magic, ndim):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxTruncatedError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IdxMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxTruncatedError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        raise IdxTruncatedError(f"{path}: expected {size} data bytes, found {len(data) - header}")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(path):
    return _read_idx(path, IDX_IMAGES_MAGIC, 3)


def read_idx_labels(path):
    return _read_idx(path, IDX_LABELS_MAGIC, 1)


def write_idx(path, array):
    """Write a uint8 array of rank 1 (labels) or 3 (images) in IDX format."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(a.ndim)
    if magic is None:
        raise ValueError("IDX writer supports rank-1 labels or rank-3 images")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{a.ndim}I", *a.shape))
        fh.write(a.tobytes())


def load_idx(images_path, labels_path, test_images_path=None, test_labels_path=None, seed=0,
             split=DEFAULT_SPLIT, val_fraction=0.1, standardize=False, num_classes=None):
    """Load an MNIST-style IDX pair; pixels become reals in [0, 1].

    With a separate test pair the benchmark split is kept: the first pair is
    divided into train/val by ``val_fraction`` and the second is the test
    split. Otherwise ``split`` is applied with a seeded permutation.
    """
    def pair(img_path, lab_path):
        images = read_idx_images(img_path)
        labels = read_idx_labels(lab_path)
        if images.shape[0] != labels.shape[0]:
            raise IdxCountMismatchError(f"{img_path} has {images.shape[0]} images, {lab_path} has {labels.shape[0]} labels")
        return images.reshape(images.shape[0], -1).astype(np.float64) / 255.0, labels.astype(np.int64)

    x, y = pair(images_path, labels_path)
    rng = np.random.default_rng(seed)
    if test_images_path is not None:
        xt, yt = pair(test_images_path, test_labels_path)
        if xt.shape[1] != x.shape[1]:
            raise IdxCountMismatchError("train and test images differ in size")
        perm = rng.permutation(len(y))
        n_val = int(round(val_fraction * len(y)))
        val, train = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        test = np.arange(len(y), len(y) + len(yt))
        x, y = np.vstack([x, xt]), np.concatenate([y, yt])
    else:
        train, val, test = _split_indices(len(y), split, rng)
    k = int(num_classes) if num_classes is not None else int(y.max()) + 1
    meta = {"source": "idx", "images": str(images_path), "labels": str(labels_path), "seed": seed}
    ds = Dataset(x, y, train, val, test, k, meta)
    return ds.standardized() if standardize else ds
