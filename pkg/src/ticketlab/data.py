"""Dataset ingestion and summarization.

Covers IDX image/label files, deterministic synthetic fixtures, and the
distilled-data providers: random per-class subsets, class means, and
per-class k-means herding.  Externally distilled data plugs in through the
DSTL file format (save_distilled / load_distilled).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

DSTL_MAGIC = b"DSTL"
DSTL_VERSION = 1
PROVENANCE_CODES = {"random": 0, "classMean": 1, "kmeansHerding": 2, "external": 3}
_CODE_TO_PROVENANCE = {v: k for k, v in PROVENANCE_CODES.items()}


class FormatError(ValueError):
    """Malformed IDX or DSTL file."""


@dataclass
class LabeledDataset:
    """Examples of shape (N, *dims), integer labels, class count."""

    examples: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.examples = np.asarray(self.examples, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.examples.shape[0] != self.labels.shape[0]:
            raise ValueError("examples/labels count mismatch")
        if self.examples.shape[0] < 1:
            raise ValueError("dataset must be non-empty")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")

    @property
    def size(self) -> int:
        return self.examples.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.examples[idx], self.labels[idx], self.num_classes)


@dataclass
class DistilledDataset(LabeledDataset):
    """A synthetic summary of a larger dataset; ipc = images per class."""

    provenance: str = "external"
    ipc: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.provenance not in PROVENANCE_CODES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if not np.all(np.isfinite(self.examples)):
            raise ValueError("distilled examples must be finite")


# ---------------------------------------------------------------------------
# IDX files

def _read_exact(f, n, what):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated file while reading {what}")
    return buf


def _load_idx_array(path, expected_magic):
    with open(path, "rb") as f:
        magic, = struct.unpack(">I", _read_exact(f, 4, "magic"))
        if magic != expected_magic:
            raise FormatError(f"bad magic 0x{magic:08x} in {path}")
        ndim = magic & 0xFF
        dims = struct.unpack(f">{ndim}I", _read_exact(f, 4 * ndim, "dimensions"))
        payload = _read_exact(f, int(np.prod(dims)), "payload")
        if f.read(1):
            raise FormatError(f"trailing bytes in {path}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path, num_classes=None) -> LabeledDataset:
    """Parse an IDX image/label file pair; pixels scaled by 1/255."""
    images = _load_idx_array(images_path, IMAGE_MAGIC)
    labels = _load_idx_array(labels_path, LABEL_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError("image/label counts differ")
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    return LabeledDataset(images.astype(np.float64) / 255.0,
                          labels.astype(np.int64), num_classes)


def write_idx(data: LabeledDataset, images_path, labels_path):
    """Inverse of load_idx; values are rounded back to bytes."""
    images = np.clip(np.round(data.examples * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">I", IMAGE_MAGIC))
        f.write(struct.pack(f">{images.ndim}I", *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">I", LABEL_MAGIC))
        f.write(struct.pack(">I", data.size))
        f.write(data.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Synthetic fixtures

def synth_dataset(kind, num_classes, per_class, noise, seed,
                  input_shape=(2,), geometry_seed=0) -> LabeledDataset:
    """Deterministic synthetic dataset.

    gaussianBlobs: class means on a circle of radius 3 (embedded in a random
    2-plane when the input has more than two dimensions) plus isotropic
    Gaussian noise.  spirals: interleaved 2-D spiral arms.  The class
    geometry depends only on geometry_seed, so draws with different sample
    seeds share the same underlying distribution.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    rng = np.random.default_rng(seed)
    dim = int(np.prod(input_shape))
    n = num_classes * per_class
    labels = np.repeat(np.arange(num_classes), per_class)

    if kind == "gaussianBlobs":
        if dim == 2:
            basis = np.eye(2)
        else:
            raw = np.random.default_rng([geometry_seed, dim]).standard_normal((2, dim))
            q, _ = np.linalg.qr(raw.T)
            basis = q.T  # orthonormal 2-plane to carry the circle
        angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
        means = 3.0 * (np.stack([np.cos(angles), np.sin(angles)], axis=1) @ basis)
        x = means[labels] + noise * rng.standard_normal((n, dim))
    elif kind == "spirals":
        if dim != 2:
            raise ValueError("spirals requires 2-D inputs")
        t = np.tile(np.linspace(0.25, 1.0, per_class), num_classes)
        theta = 3.0 * np.pi * t + 2.0 * np.pi * labels / num_classes
        r = 3.0 * t
        x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        x += noise * rng.standard_normal((n, 2))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return LabeledDataset(x.reshape((n,) + tuple(input_shape)), labels, num_classes)


# ---------------------------------------------------------------------------
# Distillers

def _class_indices(data: LabeledDataset):
    return [np.flatnonzero(data.labels == c) for c in range(data.num_classes)]


def distill_random(data: LabeledDataset, ipc: int, seed: int) -> DistilledDataset:
    """Uniform per-class sample without replacement."""
    rng = np.random.default_rng(seed)
    picks = []
    for idx in _class_indices(data):
        if ipc > idx.size:
            raise ValueError(f"ipc={ipc} exceeds class size {idx.size}")
        picks.append(np.sort(rng.choice(idx, size=ipc, replace=False)))
    idx = np.concatenate(picks)
    return DistilledDataset(data.examples[idx], data.labels[idx], data.num_classes,
                            provenance="random", ipc=ipc)


def distill_class_mean(data: LabeledDataset) -> DistilledDataset:
    """One synthetic image per class: the arithmetic mean of the class."""
    means, labels = [], []
    for c, idx in enumerate(_class_indices(data)):
        if idx.size == 0:
            raise ValueError(f"class {c} is empty")
        means.append(data.examples[idx].mean(axis=0))
        labels.append(c)
    return DistilledDataset(np.stack(means), np.asarray(labels), data.num_classes,
                            provenance="classMean", ipc=1)


def _kmeans_plus_plus(points, k, rng):
    """k-means++ style seeding; deterministic given the rng state."""
    centers = [points[rng.integers(points.shape[0])]]
    for _ in range(1, k):
        d2 = np.min([np.sum((points - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total == 0.0:
            centers.append(points[int(np.argmin(d2))])
            continue
        r = rng.random() * total
        centers.append(points[int(np.searchsorted(np.cumsum(d2), r))])
    return np.stack(centers)


def _kmeans(points, k, iterations, rng):
    centers = _kmeans_plus_plus(points, k, rng)
    for _ in range(iterations):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)  # ties go to the lowest center index
        for j in range(k):
            members = points[assign == j]
            if members.shape[0] == 0:
                # re-seed an empty cluster from the farthest point
                far = int(np.argmax(np.min(d2, axis=1)))
                centers[j] = points[far]
            else:
                centers[j] = members.mean(axis=0)
    return centers


def kmeans_objective(points, centers):
    """Total within-cluster squared distance; herding quality measure."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return float(np.min(d2, axis=1).sum())


def distill_kmeans_herding(data: LabeledDataset, ipc: int, iterations: int = 50,
                           seed: int = 0) -> DistilledDataset:
    """Per-class k-means centroids (k = ipc) as synthetic images."""
    shape = data.examples.shape[1:]
    images, labels = [], []
    for c, idx in enumerate(_class_indices(data)):
        if ipc > idx.size:
            raise ValueError(f"ipc={ipc} exceeds class size {idx.size}")
        rng = np.random.default_rng([seed, c])
        points = data.examples[idx].reshape(idx.size, -1)
        centers = _kmeans(points, ipc, iterations, rng)
        images.append(centers.reshape((ipc,) + shape))
        labels.extend([c] * ipc)
    return DistilledDataset(np.concatenate(images), np.asarray(labels),
                            data.num_classes, provenance="kmeansHerding", ipc=ipc)


# ---------------------------------------------------------------------------
# DSTL distilled-data files (little-endian)

def save_distilled(dsyn: DistilledDataset, path):
    """Write the DSTL format: magic, version, counts, dims, provenance,
    float32 payload in class-major order, u16 labels."""
    order = np.argsort(dsyn.labels, kind="stable")
    examples = dsyn.examples[order]
    labels = dsyn.labels[order]
    dims = examples.shape[1:]
    with open(path, "wb") as f:
        f.write(DSTL_MAGIC)
        f.write(struct.pack("<IIII", DSTL_VERSION, dsyn.num_classes, dsyn.ipc,
                            len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<B", PROVENANCE_CODES[dsyn.provenance]))
        f.write(examples.astype("<f4").tobytes())
        f.write(labels.astype("<u2").tobytes())


def load_distilled(path) -> DistilledDataset:
    with open(path, "rb") as f:
        if _read_exact(f, 4, "magic") != DSTL_MAGIC:
            raise FormatError(f"bad magic in {path}")
        version, num_classes, ipc, rank = struct.unpack(
            "<IIII", _read_exact(f, 16, "header"))
        if version != DSTL_VERSION:
            raise FormatError(f"unsupported DSTL version {version}")
        dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
        code, = struct.unpack("<B", _read_exact(f, 1, "provenance"))
        if code not in _CODE_TO_PROVENANCE:
            raise FormatError(f"unknown provenance code {code}")
        n = num_classes * ipc
        per = int(np.prod(dims))
        payload = _read_exact(f, 4 * n * per, "image payload")
        label_bytes = _read_exact(f, 2 * n, "labels")
        if f.read(1):
            raise FormatError(f"trailing bytes in {path}")
    examples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    labels = np.frombuffer(label_bytes, dtype="<u2").astype(np.int64)
    if np.any(np.diff(labels) < 0):
        raise FormatError("labels must be class-major ascending")
    return DistilledDataset(examples.reshape((n,) + dims), labels, num_classes,
                            provenance=_CODE_TO_PROVENANCE[code], ipc=ipc)
