"""IDX digit files, synthetic Gaussian blobs, splits and epoch batching."""
import csv
import gzip
import logging
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .rng import stream

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class IdxMagicError(IdxError):
    pass


class IdxTruncatedError(IdxError):
    pass


class IdxCountMismatchError(IdxError):
    pass


class LabelRangeError(IdxError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a (samples, dim) matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels disagree on sample count")
        if self.classes < 1:
            raise ValueError("classes must be positive")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise LabelRangeError(f"labels must lie in [0, {self.classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        return Dataset(self.features[idx], self.labels[idx], self.classes)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.dim)] + ["label"])
            for row, lab in zip(self.features, self.labels):
                w.writerow([repr(float(v)) for v in row] + [int(lab)])


def _open(path):
    path = str(path)
    return gzip.open(path, "rb") if path.endswith(".gz") else open(path, "rb")


def read_idx(path, expected_magic=None):
    """Read an unsigned-byte IDX array (the MNIST distribution format)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: missing header")
    magic = struct.unpack(">I", raw[:4])[0]
    if expected_magic is not None and magic != expected_magic:
        raise IdxMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise IdxMagicError(f"{path}: unsupported IDX type in magic 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise IdxTruncatedError(f"{path}: truncated header")
    shape = struct.unpack(f">{ndim}I", raw[4:head])
    n = int(np.prod(shape))
    if len(raw) - head < n:
        raise IdxTruncatedError(f"{path}: expected {n} bytes of data, found {len(raw) - head}")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=head).reshape(shape)


def write_idx(path, array):
    array = np.asarray(array, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def load_idx(images_path, labels_path, classes=10, standardize=False):
    """Load an image/label IDX pair. Pixels are scaled to [0, 1]."""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if len(images) != len(labels):
        raise IdxCountMismatchError(f"{len(images)} images but {len(labels)} labels")
    if len(labels) and labels.max() >= classes:
        raise LabelRangeError(f"label {int(labels.max())} outside [0, {classes})")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    if standardize:
        mu = x.mean(axis=1, keepdims=True)
        sd = x.std(axis=1, keepdims=True)
        x = (x - mu) / np.where(sd > 0, sd, 1.0)
    return Dataset(x, labels.astype(np.int64), classes)


def blob_centers(classes, dim):
    """Fixed class means: +e1, -e1, +e2, -e2, ... then seeded unit vectors."""
    centers = np.zeros((classes, dim))
    for c in range(min(classes, 2 * dim)):
        centers[c, c // 2] = 1.0 if c % 2 == 0 else -1.0
    if classes > 2 * dim:
        extra = stream(0, "blob-centers", classes, dim).standard_normal((classes - 2 * dim, dim))
        centers[2 * dim:] = extra / np.linalg.norm(extra, axis=1, keepdims=True)
    return centers


def synth_blobs(classes, dim, per_class, spread, seed):
    if min(classes, dim, per_class) < 1:
        raise ValueError("classes, dim and per_class must be >= 1")
    if spread <= 0:
        raise ValueError("spread must be positive")
    rng = stream(seed, "blobs")
    centers = blob_centers(classes, dim)
    labels = np.repeat(np.arange(classes), per_class)
    x = centers[labels] + spread * rng.standard_normal((len(labels), dim))
    return Dataset(x, labels, classes)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.5
    seed: int = 0
    subset_size: int = None
    balanced: bool = True

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.subset_size is not None and self.subset_size < 1:
            raise ValueError("subset_size must be positive")


def subset_indices(ds, spec, rng):
    n = len(ds)
    if spec.subset_size is None or spec.subset_size >= n:
        return np.arange(n)
    if not spec.balanced:
        return np.sort(rng.choice(n, spec.subset_size, replace=False))
    per = spec.subset_size // ds.classes
    rem = spec.subset_size - per * ds.classes
    picked = []
    for c in range(ds.classes):
        members = np.flatnonzero(ds.labels == c)
        take = per + (1 if c < rem else 0)
        if take > len(members):
            raise ValueError(f"class {c} has only {len(members)} samples, need {take}")
        picked.append(rng.choice(members, take, replace=False))
    return np.sort(np.concatenate(picked))


def split(ds, spec):
    """Disjoint train/test split of an (optionally class-balanced) subset."""
    rng = stream(spec.seed, "split")
    idx = subset_indices(ds, spec, rng)
    idx = idx[rng.permutation(len(idx))]
    n_train = int(round(spec.train_fraction * len(idx)))
    return ds.subset(np.sort(idx[:n_train])), ds.subset(np.sort(idx[n_train:]))


def batches(ds, batch_size, epoch_seed):
    """Shuffled minibatches covering ``ds`` exactly once; the short tail batch is kept.

    ``epoch_seed`` is an int or a tuple such as ``(run_seed, epoch)``.
    """
    n = len(ds)
    if batch_size > n:
        warnings.warn(f"batch size {batch_size} exceeds {n} samples; using one batch", stacklevel=2)
        batch_size = n
    key = epoch_seed if isinstance(epoch_seed, tuple) else (epoch_seed,)
    order = stream(key[0], "epoch", *key[1:]).permutation(n)
    return [(ds.features[order[i:i + batch_size]], ds.labels[order[i:i + batch_size]])
            for i in range(0, n, batch_size)]
