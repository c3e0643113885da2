"""Sparse vectors, multilabel datasets and the extreme-classification text format.

The on-disk format is the one used by the Extreme Classification Repository::

    N d L
    l1,l2,... f1:v1 f2:v2 ...
    ...

Label and feature indices are **0-based**.  A point without labels is written
with a leading space (``" 3:1.0 7:0.5"``).
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DataError, DimensionError, ParseError

__all__ = [
    "SparseVector",
    "Dataset",
    "parse_dataset",
    "load_dataset",
    "serialize_dataset",
    "save_dataset",
    "sparse_dot",
    "dataset_stats",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SparseVector:
    """A vector of dimension ``dim`` stored as sorted (index, value) pairs.

    Indices are strictly increasing, lie in ``[0, dim)`` and no stored value
    is zero.  The backing arrays are read-only.
    """

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.dim < 0:
            raise DataError(f"negative dimension {self.dim}")
        if idx.shape != val.shape:
            raise DataError("indices and values differ in length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise DataError(f"index out of range for dimension {self.dim}")
            if np.any(np.diff(idx) <= 0):
                raise DataError("indices must be strictly increasing")
            if np.any(val == 0.0):
                raise DataError("stored values must be nonzero")
            if not np.all(np.isfinite(val)):
                raise DataError("values must be finite")
        object.__setattr__(self, "indices", _frozen(idx.copy() if idx is self.indices else idx))
        object.__setattr__(self, "values", _frozen(val.copy() if val is self.values else val))

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        """Build from unordered pairs; zero values are dropped, duplicates rejected."""
        pairs = sorted((int(i), float(v)) for i, v in pairs)
        for (i, _), (j, _) in zip(pairs, pairs[1:]):
            if i == j:
                raise DataError(f"duplicate index {i}")
        pairs = [(i, v) for i, v in pairs if v != 0.0]
        if not pairs:
            return cls.zeros(dim)
        idx, val = zip(*pairs)
        return cls(dim, np.array(idx, dtype=np.int64), np.array(val, dtype=np.float64))

    @classmethod
    def from_dense(cls, x) -> "SparseVector":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        idx = np.flatnonzero(x)
        return cls(x.size, idx, x[idx])

    @classmethod
    def indicator(cls, dim: int, indices: Iterable[int]) -> "SparseVector":
        """Binary vector with ones at ``indices`` (deduplicated)."""
        idx = np.unique(np.asarray(list(indices), dtype=np.int64))
        return cls(dim, idx, np.ones(idx.size))

    @classmethod
    def zeros(cls, dim: int) -> "SparseVector":
        return cls(dim, np.empty(0, dtype=np.int64), np.empty(0))

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self.values == 1.0))

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))

    def __repr__(self):
        body = ", ".join(f"({i}, {v!r})" for i, v in zip(self.indices.tolist(), self.values.tolist()))
        return f"SparseVector(dim={self.dim}, [{body}])"


def sparse_dot(a: SparseVector, b: SparseVector) -> float:
    """Dot product of two sparse vectors by a linear merge of their supports."""
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ia, va = a.indices.tolist(), a.values.tolist()
    ib, vb = b.indices.tolist(), b.values.tolist()
    i = j = 0
    total = 0.0
    while i < len(ia) and j < len(ib):
        if ia[i] == ib[j]:
            total += va[i] * vb[j]
            i += 1
            j += 1
        elif ia[i] < ib[j]:
            i += 1
        else:
            j += 1
    return total


def _rows_to_csr(rows: Sequence[SparseVector], dim: int) -> sp.csr_matrix:
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    if rows:
        np.cumsum([r.nnz for r in rows], out=indptr[1:])
        indices = np.concatenate([r.indices for r in rows])
        data = np.concatenate([r.values for r in rows])
    else:
        indices = np.empty(0, dtype=np.int64)
        data = np.empty(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(rows), dim))


def _csr_to_rows(m: sp.csr_matrix) -> tuple[SparseVector, ...]:
    m = sp.csr_matrix(m, dtype=np.float64)
    m.eliminate_zeros()
    m.sort_indices()
    dim = m.shape[1]
    return tuple(
        SparseVector(dim, m.indices[m.indptr[r]:m.indptr[r + 1]], m.data[m.indptr[r]:m.indptr[r + 1]])
        for r in range(m.shape[0])
    )


@dataclass(frozen=True, eq=False)
class Dataset:
    """N multilabel points: sparse features in R^d and binary labels over L labels."""

    n_features: int
    n_labels: int
    features: tuple[SparseVector, ...]
    labels: tuple[SparseVector, ...]

    def __post_init__(self):
        feats, labs = tuple(self.features), tuple(self.labels)
        if len(feats) != len(labs):
            raise DataError(f"{len(feats)} feature vectors but {len(labs)} label vectors")
        for i, (x, y) in enumerate(zip(feats, labs)):
            if x.dim != self.n_features:
                raise DimensionError(f"point {i}: feature dim {x.dim} != {self.n_features}")
            if y.dim != self.n_labels:
                raise DimensionError(f"point {i}: label dim {y.dim} != {self.n_labels}")
            if not y.is_binary:
                raise DataError(f"point {i}: label vector is not binary")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)

    @classmethod
    def from_matrices(cls, X, Y) -> "Dataset":
        """Build from an N x d feature matrix and an N x L 0/1 label matrix."""
        X = sp.csr_matrix(X)
        Y = sp.csr_matrix(Y)
        return cls(X.shape[1], Y.shape[1], _csr_to_rows(X), _csr_to_rows(Y))

    @property
    def n_points(self) -> int:
        return len(self.features)

    def __len__(self):
        return self.n_points

    @cached_property
    def feature_matrix(self) -> sp.csr_matrix:
        """Features as an N x d CSR matrix."""
        return _rows_to_csr(self.features, self.n_features)

    @cached_property
    def label_matrix(self) -> sp.csr_matrix:
        """Labels as an N x L CSR matrix of ones."""
        return _rows_to_csr(self.labels, self.n_labels)

    @cached_property
    def zero_label_mask(self) -> np.ndarray:
        """True for points that carry no labels (kept, but flagged)."""
        return _frozen(np.array([y.nnz == 0 for y in self.labels], dtype=bool))

    def subset(self, indices) -> "Dataset":
        idx = [int(i) for i in indices]
        return Dataset(
            self.n_features,
            self.n_labels,
            tuple(self.features[i] for i in idx),
            tuple(self.labels[i] for i in idx),
        )

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.n_features == other.n_features
            and self.n_labels == other.n_labels
            and self.features == other.features
            and self.labels == other.labels
        )


def dataset_stats(d: Dataset) -> tuple[float, float]:
    """Return ``(avg_nnz_x, avg_nnz_y)``, the mean nonzero counts per point."""
    if d.n_points == 0:
        raise DataError("dataset is empty")
    nx = sum(x.nnz for x in d.features)
    ny = sum(y.nnz for y in d.labels)
    return nx / d.n_points, ny / d.n_points


def _parse_int(tok: str, what: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"non-integer {what} {tok!r}", line) from None


def _parse_labels(tok: str, n_labels: int, line: int) -> list[int]:
    out = []
    for part in tok.split(","):
        if not part:
            raise ParseError("empty entry in label list", line)
        if ":" in part:
            part, weight = part.split(":", 1)
            try:
                w = float(weight)
            except ValueError:
                raise ParseError(f"non-numeric label weight {weight!r}", line) from None
            if w != 1.0:
                raise ParseError(f"label weight {weight!r} is not 1", line)
        lab = _parse_int(part, "label", line)
        if not 0 <= lab < n_labels:
            raise ParseError(f"label {lab} outside [0, {n_labels})", line)
        out.append(lab)
    return out


def _parse_features(tokens: list[str], n_features: int, line: int) -> SparseVector:
    idx, val = [], []
    seen = set()
    for tok in tokens:
        if ":" not in tok:
            raise ParseError(f"feature token {tok!r} is not index:value", line)
        i_s, v_s = tok.split(":", 1)
        i = _parse_int(i_s, "feature index", line)
        if not 0 <= i < n_features:
            raise ParseError(f"feature index {i} outside [0, {n_features})", line)
        if i in seen:
            raise ParseError(f"duplicate feature index {i}", line)
        seen.add(i)
        try:
            v = float(v_s)
        except ValueError:
            raise ParseError(f"non-numeric feature value {v_s!r}", line) from None
        if not math.isfinite(v):
            raise ParseError(f"non-finite feature value {v_s!r}", line)
        if v != 0.0:
            idx.append(i)
            val.append(v)
    order = np.argsort(np.asarray(idx, dtype=np.int64), kind="stable")
    return SparseVector(n_features, np.asarray(idx, dtype=np.int64)[order], np.asarray(val)[order])


def parse_dataset(text_stream) -> Dataset:
    """Parse a dataset from a string, a text stream or an iterable of lines.

    Raises
    ------
    ParseError
        On a malformed header, out-of-range or duplicate indices, non-numeric
        values, or a body whose line count differs from the header's N.
    """
    if isinstance(text_stream, str):
        text_stream = io.StringIO(text_stream)
    lines = iter(text_stream)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError("missing header", 1) from None
    parts = header.split()
    if len(parts) != 3:
        raise ParseError(f"header must be 'N d L', got {header.strip()!r}", 1)
    n, d, n_labels = (_parse_int(p, "header field", 1) for p in parts)
    if n < 0 or d < 0 or n_labels < 0:
        raise ParseError("negative header field", 1)

    features, labels = [], []
    trailing_blank = 0
    for lineno, raw in enumerate(lines, start=2):
        raw = raw.rstrip("\r\n")
        if len(features) == n:
            if raw.strip():
                raise ParseError(f"more than {n} data lines", lineno)
            trailing_blank += 1
            continue
        if raw[:1].isspace() or not raw:
            label_tok, rest = "", raw.split()
        else:
            label_tok, *rest = raw.split()
        labs = _parse_labels(label_tok, n_labels, lineno) if label_tok else []
        features.append(_parse_features(rest, d, lineno))
        labels.append(SparseVector.indicator(n_labels, labs))
    if len(features) != n:
        raise ParseError(f"header declares {n} points but found {len(features)}")
    return Dataset(d, n_labels, tuple(features), tuple(labels))


def load_dataset(path: str | os.PathLike) -> Dataset:
    """Read a dataset file (UTF-8, LF or CRLF line endings)."""
    with open(path, encoding="utf-8", newline=None) as fh:
        return parse_dataset(fh)


def _format_line(x: SparseVector, y: SparseVector) -> str:
    labs = ",".join(str(i) for i in y.indices.tolist())
    feats = " ".join(f"{i}:{v!r}" for i, v in zip(x.indices.tolist(), x.values.tolist()))
    if not feats:
        return labs
    return f"{labs} {feats}"


def serialize_dataset(d: Dataset) -> str:
    """Canonical text form: sorted indices, deduplicated labels, shortest float repr."""
    out = [f"{d.n_points} {d.n_features} {d.n_labels}"]
    out.extend(_format_line(x, y) for x, y in zip(d.features, d.labels))
    return "\n".join(out) + "\n"


def save_dataset(d: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_dataset(d))
