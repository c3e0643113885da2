"""Exact brute-force k-nearest-neighbor search over embedded label vectors."""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

__all__ = ["Metric", "EmbeddedIndex", "NeighborList", "knn", "knn_batch", "select_smallest"]

# Cosine distance assigned when either vector has zero norm (the top of the
# [0, 2] cosine-distance range).
ZERO_NORM_COSINE_DISTANCE = 2.0

# Distance tiles (queries x points) sized to stay cache-resident.
_TILE_ELEMS = 1 << 15
_TILE_POINTS = 4096


class Metric(str, enum.Enum):
    SQUARED_EUCLIDEAN = "squared_euclidean"
    COSINE = "cosine"


def _sq_norms(A: np.ndarray) -> np.ndarray:
    """Row sums of squares accumulated left to right over coordinates."""
    acc = np.zeros(A.shape[0])
    for j in range(A.shape[1]):
        acc += A[:, j] * A[:, j]
    return acc


class EmbeddedIndex:
    """N embedded vectors searchable by exact scan.

    ``vectors`` is N x m (row i is ``z_i``), the transpose of the m x N
    column layout; ``Z`` returns that m x N view.

    Every distance is accumulated over coordinates 0..m-1 in order, so a
    distance's rounding depends only on the two vectors, never on batching
    or on the other stored points.
    """

    def __init__(self, vectors, point_ids=None, metric=Metric.SQUARED_EUCLIDEAN):
        vectors = np.array(vectors, dtype=np.float64, order="C", ndmin=2)
        if not np.all(np.isfinite(vectors)):
            raise NumericError("embedded vectors must be finite")
        if point_ids is None:
            point_ids = np.arange(vectors.shape[0], dtype=np.int64)
        point_ids = np.array(point_ids, dtype=np.int64).reshape(-1)
        if point_ids.size != vectors.shape[0]:
            raise DimensionError(f"{point_ids.size} point ids for {vectors.shape[0]} vectors")
        if np.unique(point_ids).size != point_ids.size:
            raise ValueError("point ids must be distinct")
        self.metric = Metric(metric)
        vectors.setflags(write=False)
        point_ids.setflags(write=False)
        self.vectors = vectors
        self.point_ids = point_ids
        cols = np.ascontiguousarray(vectors.T)
        cols.setflags(write=False)
        self._cols = cols
        norms = np.sqrt(_sq_norms(vectors))
        norms.setflags(write=False)
        self._norms = norms

    @property
    def Z(self) -> np.ndarray:
        return self.vectors.T

    @property
    def n_points(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.n_points

    def distances(self, Q) -> np.ndarray:
        """Distances from each row of ``Q`` (b x m) to every stored vector; b x N."""
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        if Q.shape[1] != self.dim:
            raise DimensionError(f"query has dim {Q.shape[1]}, index has dim {self.dim}")
        if not np.all(np.isfinite(Q)):
            raise NumericError("query must be finite")
        out = np.empty((Q.shape[0], self.n_points))
        tp = min(self.n_points, _TILE_POINTS) or 1
        tq = max(1, _TILE_ELEMS // tp)
        for s in range(0, Q.shape[0], tq):
            for t in range(0, self.n_points, tp):
                out[s:s + tq, t:t + tp] = self._block(Q[s:s + tq], t, t + tp)
        return out

    def _block(self, Q, lo, hi):
        cols = self._cols[:, lo:hi]
        acc = np.zeros((Q.shape[0], cols.shape[1]))
        tmp = np.empty_like(acc)
        if self.metric is Metric.SQUARED_EUCLIDEAN:
            for j in range(self.dim):
                np.subtract(cols[j][None, :], Q[:, j:j + 1], out=tmp)
                tmp *= tmp
                acc += tmp
            return acc
        for j in range(self.dim):
            np.multiply(cols[j][None, :], Q[:, j:j + 1], out=tmp)
            acc += tmp
        dots = acc
        qn = np.sqrt(_sq_norms(Q))
        denom = self._norms[None, lo:hi] * qn[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = 1.0 - dots / denom
        dist[denom == 0.0] = ZERO_NORM_COSINE_DISTANCE
        return dist


@dataclass(frozen=True, eq=False)
class NeighborList:
    ids: np.ndarray
    distances: np.ndarray
    clamped: bool = False

    def __len__(self):
        return int(self.ids.size)


def select_smallest(dist: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest distances, ties to the smaller id."""
    n = dist.size
    if k < n:
        thr = np.partition(dist, k - 1)[k - 1]
        cand = np.flatnonzero(dist <= thr)
    else:
        cand = np.arange(n)
    order = np.lexsort((ids[cand], dist[cand]))
    return cand[order[:k]]


def _check_k(index: EmbeddedIndex, k: int) -> tuple[int, bool]:
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if index.n_points == 0:
        raise ValueError("index is empty")
    if k > index.n_points:
        return index.n_points, True
    return k, False


def knn(index: EmbeddedIndex, q, k: int) -> NeighborList:
    """The k stored vectors closest to ``q``; ``k > N`` is clamped to N."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    k_eff, clamped = _check_k(index, k)
    dist = index.distances(q[None, :])[0]
    pos = select_smallest(dist, index.point_ids, k_eff)
    return NeighborList(index.point_ids[pos], dist[pos], clamped)


def knn_batch(index: EmbeddedIndex, Q, k: int, threads: int = 1) -> tuple[np.ndarray, np.ndarray, bool]:
    """Batch search; returns ``(ids, distances, clamped)`` with b x k arrays.

    Row i equals ``knn(index, Q[i], k)`` exactly, whatever ``threads`` is.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    k_eff, clamped = _check_k(index, k)
    ids = np.empty((Q.shape[0], k_eff), dtype=np.int64)
    dists = np.empty((Q.shape[0], k_eff))

    def work(rows):
        D = index.distances(Q[rows])
        for r, drow in zip(rows, D):
            pos = select_smallest(drow, index.point_ids, k_eff)
            ids[r] = index.point_ids[pos]
            dists[r] = drow[pos]

    rows = max(1, min(256, (1 << 18) // max(1, index.n_points)))
    parts = [np.arange(s, min(s + rows, Q.shape[0])) for s in range(0, Q.shape[0], rows)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, parts))
    else:
        for p in parts:
            work(p)
    return ids, dists, clamped
