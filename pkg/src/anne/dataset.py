"""In-memory feature dataset and its on-disk binary format.

A dataset is N feature vectors (float32, dimension d), one observed label per
sample, optionally a hidden true label per sample, and stable sample ids.
The observed labels live in [0, C); true labels may additionally take the
value C, the out-of-distribution sentinel used by open-set noise injection.

On-disk layout ("ANNE1" format), all sections little-endian:

    bytes 0..4    uint32 header length H
    bytes 4..4+H  UTF-8 JSON header:
                  {"magic": "ANNE1", "version": 1, "n": N, "d": D, "c": C,
                   "has_true_labels": bool}
    features      N*D float32, row-major
    noisy labels  N int32
    true labels   N int32, present iff has_true_labels
    sample ids    N int64

No trailing bytes are allowed. Files round-trip bit-exactly.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IoFailure,
    LengthMismatch,
    MalformedHeader,
    NonFiniteFeature,
    SizeMismatch,
    ZeroVector,
)

_MAGIC = "ANNE1"


def _check_features(features):
    bad = ~np.isfinite(features)
    if bad.any():
        row = int(np.nonzero(bad.any(axis=1))[0][0])
        raise NonFiniteFeature(f"features row {row} contains NaN/Inf")


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled feature dataset.

    features: (N, d) float32; noisy_labels: (N,) int32 in [0, C);
    true_labels: optional (N,) int32 in [0, C] (C = open-set sentinel);
    sample_ids: (N,) unique int64.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    class_count: int
    true_labels: np.ndarray | None = None
    sample_ids: np.ndarray | None = None

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features), dtype=np.float32)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-d array")
        _check_features(feats)
        n = feats.shape[0]

        labels = np.ascontiguousarray(np.asarray(self.noisy_labels), dtype=np.int32)
        if labels.shape != (n,):
            raise LengthMismatch(f"noisy_labels length {labels.shape} != {n}")
        c = int(self.class_count)
        if c < 2:
            raise ValueError("class_count must be >= 2")
        if labels.size and (labels.min() < 0 or labels.max() >= c):
            raise ValueError("noisy label out of range [0, class_count)")

        true = self.true_labels
        if true is not None:
            true = np.ascontiguousarray(np.asarray(true), dtype=np.int32)
            if true.shape != (n,):
                raise LengthMismatch(f"true_labels length {true.shape} != {n}")
            if true.size and (true.min() < 0 or true.max() > c):
                raise ValueError("true label out of range [0, class_count]")

        ids = self.sample_ids
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.ascontiguousarray(np.asarray(ids), dtype=np.int64)
            if ids.shape != (n,):
                raise LengthMismatch(f"sample_ids length {ids.shape} != {n}")
            if np.unique(ids).size != n:
                raise ValueError("sample_ids must be unique")

        for arr in (feats, labels, true, ids):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "noisy_labels", labels)
        object.__setattr__(self, "class_count", c)
        object.__setattr__(self, "true_labels", true)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def with_labels(self, noisy_labels):
        """Copy of this dataset with replaced observed labels."""
        return Dataset(self.features, noisy_labels, self.class_count,
                       self.true_labels, self.sample_ids)

    def equals(self, other):
        """Bit-exact equality on every field."""
        if not isinstance(other, Dataset) or self.class_count != other.class_count:
            return False
        if (self.true_labels is None) != (other.true_labels is None):
            return False
        same = (np.array_equal(self.features, other.features)
                and np.array_equal(self.noisy_labels, other.noisy_labels)
                and np.array_equal(self.sample_ids, other.sample_ids))
        if same and self.true_labels is not None:
            same = np.array_equal(self.true_labels, other.true_labels)
        return same


@dataclass(frozen=True)
class Predictions:
    """Per-sample class-probability rows with an epoch provenance tag."""

    probs: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        probs = np.ascontiguousarray(np.asarray(self.probs), dtype=np.float64)
        if probs.ndim != 2:
            raise ValueError("probs must be a 2-d array")
        if probs.size:
            if probs.min() < -1e-12 or probs.max() > 1 + 1e-12:
                raise ValueError("probabilities outside [0, 1]")
            sums = probs.sum(axis=1)
            if np.abs(sums - 1.0).max() > 1e-5:
                row = int(np.abs(sums - 1.0).argmax())
                raise ValueError(f"probs row {row} sums to {sums[row]:.8f}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "epoch", int(self.epoch))

    @property
    def n(self):
        return self.probs.shape[0]

    @property
    def class_count(self):
        return self.probs.shape[1]

    def max_scores(self):
        return self.probs.max(axis=1)


def save_dataset(dataset, path):
    """Write `dataset` to `path` in ANNE1 format. Raises IoFailure on OS errors."""
    header = {
        "magic": _MAGIC,
        "version": 1,
        "n": dataset.n,
        "d": dataset.dim,
        "c": dataset.class_count,
        "has_true_labels": dataset.true_labels is not None,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(head)))
            fh.write(head)
            fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(dataset.noisy_labels, dtype="<i4").tobytes())
            if dataset.true_labels is not None:
                fh.write(np.ascontiguousarray(dataset.true_labels, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(dataset.sample_ids, dtype="<i8").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path):
    """Read an ANNE1 file back into a Dataset; inverse of save_dataset."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read dataset from {path}: {exc}") from exc

    if len(blob) < 4:
        raise MalformedHeader("file shorter than header length prefix")
    (hlen,) = struct.unpack("<I", blob[:4])
    if len(blob) < 4 + hlen:
        raise MalformedHeader("declared header length exceeds file size")
    try:
        header = json.loads(blob[4:4 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeader(f"header is not valid JSON: {exc}") from exc

    if not isinstance(header, dict) or header.get("magic") != _MAGIC:
        raise MalformedHeader(f"bad magic, expected {_MAGIC!r}")
    for key in ("n", "d", "c"):
        if not isinstance(header.get(key), int) or header[key] < 0:
            raise MalformedHeader(f"header field {key!r} missing or not a non-negative int")
    n, d, c = header["n"], header["d"], header["c"]
    has_true = bool(header.get("has_true_labels", False))

    sizes = [("features", n * d * 4), ("noisy_labels", n * 4)]
    if has_true:
        sizes.append(("true_labels", n * 4))
    sizes.append(("sample_ids", n * 8))
    expected = 4 + hlen + sum(s for _, s in sizes)
    if len(blob) != expected:
        raise SizeMismatch(
            f"payload is {len(blob) - 4 - hlen} bytes, expected "
            f"{expected - 4 - hlen} for sections {[name for name, _ in sizes]}")

    off = 4 + hlen
    parts = {}
    for name, size in sizes:
        parts[name] = blob[off:off + size]
        off += size

    features = np.frombuffer(parts["features"], dtype="<f4").reshape(n, d)
    _check_features(features)
    noisy = np.frombuffer(parts["noisy_labels"], dtype="<i4")
    true = np.frombuffer(parts["true_labels"], dtype="<i4") if has_true else None
    ids = np.frombuffer(parts["sample_ids"], dtype="<i8")
    return Dataset(features, noisy, c, true, ids)


def normalize_features(dataset):
    """Scale every feature row to unit L2 norm (computed in float64).

    Raises ZeroVector naming the first all-zero row. Idempotent up to
    float32 rounding; preserves pairwise cosine similarity exactly.
    """
    feats = dataset.features.astype(np.float64)
    norms = np.linalg.norm(feats, axis=1)
    zero = norms == 0.0
    if zero.any():
        raise ZeroVector(f"features row {int(np.nonzero(zero)[0][0])} has zero norm")
    feats /= norms[:, None]
    return Dataset(feats.astype(np.float32), dataset.noisy_labels,
                   dataset.class_count, dataset.true_labels, dataset.sample_ids)


def is_normalized(features, tol=1e-4):
    """True if every row of `features` has unit L2 norm within `tol`."""
    norms = np.linalg.norm(np.asarray(features, dtype=np.float64), axis=1)
    return bool(np.abs(norms - 1.0).max(initial=0.0) <= tol)
