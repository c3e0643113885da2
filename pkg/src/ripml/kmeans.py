"""Lloyd's KMeans with k-means++ seeding over sparse feature vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError
from .seeding import rng
from .sparse import SparseVector

__all__ = ["Centroids", "KMeansResult", "kmeans_fit", "lloyd", "assign", "assign_batch", "as_csr"]


def as_csr(features) -> sp.csr_matrix:
    """Coerce a list of SparseVectors, a sparse matrix or a dense array to N x d CSR."""
    if sp.issparse(features):
        return sp.csr_matrix(features, dtype=np.float64)
    if isinstance(features, np.ndarray):
        return sp.csr_matrix(np.atleast_2d(features).astype(np.float64))
    rows = list(features)
    if not rows:
        raise ConfigError("no feature vectors")
    dim = rows[0].dim
    indptr = np.zeros(len(rows) + 1, dtype=np.int64)
    np.cumsum([r.nnz for r in rows], out=indptr[1:])
    return sp.csr_matrix(
        (np.concatenate([r.values for r in rows]), np.concatenate([r.indices for r in rows]), indptr),
        shape=(len(rows), dim),
    )


class Centroids:
    """C cluster centers in R^d.

    ``centers`` is C x d (row c is center c); ``as_columns`` gives d x C.
    """

    def __init__(self, centers):
        centers = np.array(centers, dtype=np.float64, order="C", ndmin=2)
        if centers.shape[0] < 1:
            raise ConfigError("need at least one center")
        if not np.all(np.isfinite(centers)):
            raise ValueError("centers must be finite")
        centers.setflags(write=False)
        self.centers = centers
        sq = (centers * centers).sum(axis=1)
        sq.setflags(write=False)
        self._sq_norms = sq

    @property
    def C(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def as_columns(self) -> np.ndarray:
        return self.centers.T

    def sq_distances(self, X: sp.csr_matrix) -> np.ndarray:
        """N x C squared distances via ||x||^2 - 2<x, c> + ||c||^2, clipped at 0."""
        if X.shape[1] != self.dim:
            raise DimensionError(f"features have dim {X.shape[1]}, centers have dim {self.dim}")
        xx = np.asarray(X.multiply(X).sum(axis=1)).reshape(-1)
        cross = np.asarray(X @ self.centers.T)
        d2 = xx[:, None] - 2.0 * cross + self._sq_norms[None, :]
        return np.maximum(d2, 0.0)


def assign_batch(c: Centroids, X) -> np.ndarray:
    """Nearest-center id for each row; ties go to the lower id."""
    return np.argmin(c.sq_distances(as_csr(X)), axis=1)


def assign(c: Centroids, x: SparseVector) -> int:
    if x.dim != c.dim:
        raise DimensionError(f"feature vector has dim {x.dim}, centers have dim {c.dim}")
    row = sp.csr_matrix((x.values, x.indices, [0, x.nnz]), shape=(1, x.dim))
    return int(assign_batch(c, row)[0])


@dataclass
class KMeansResult:
    centroids: Centroids
    assignments: np.ndarray
    inertia: float
    n_iter: int
    inertia_history: list[float] = field(default_factory=list)


def _dense_row(X: sp.csr_matrix, i: int) -> np.ndarray:
    return X.getrow(i).toarray().reshape(-1)


def _kmeanspp(X: sp.csr_matrix, C: int, g: np.random.Generator) -> np.ndarray:
    n, d = X.shape
    centers = np.empty((C, d))
    chosen = np.zeros(n, dtype=bool)
    first = int(g.integers(n))
    centers[0] = _dense_row(X, first)
    chosen[first] = True
    closest = Centroids(centers[:1]).sq_distances(X)[:, 0]
    for c in range(1, C):
        weights = np.where(chosen, 0.0, closest)
        total = weights.sum()
        if total > 0:
            pick = int(g.choice(n, p=weights / total))
        else:
            # All remaining points coincide with a chosen center.
            pick = int(g.choice(np.flatnonzero(~chosen)))
        centers[c] = _dense_row(X, pick)
        chosen[pick] = True
        closest = np.minimum(closest, Centroids(centers[c:c + 1]).sq_distances(X)[:, 0])
    return centers


def _means(X, labels, C, old):
    n = X.shape[0]
    onehot = sp.csr_matrix((np.ones(n), (labels, np.arange(n))), shape=(C, n))
    counts = np.asarray(onehot.sum(axis=1)).reshape(-1)
    sums = np.asarray((onehot @ X).todense())
    out = old.copy()
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def _repair_empty(X, centers, labels, d2_assigned, C):
    """Move the farthest points into empty clusters; returns True if anything moved."""
    counts = np.bincount(labels, minlength=C)
    moved = False
    for c in np.flatnonzero(counts == 0):
        donors = counts[labels] > 1
        if not donors.any():
            break
        far = int(np.argmax(np.where(donors, d2_assigned, -1.0)))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        d2_assigned[far] = 0.0
        centers[c] = _dense_row(X, far)
        moved = True
    return moved


def lloyd(features, C: int, seed: int = 0, max_iters: int = 100, tol: float = 1e-4) -> KMeansResult:
    """Run k-means++ seeding then Lloyd iterations.

    Stops when no center moves by more than ``tol`` (Euclidean) or after
    ``max_iters`` iterations.  Empty clusters are refilled with the point
    farthest from its current center.  ``inertia_history`` records the
    objective after every assignment step and is nonincreasing.
    """
    X = as_csr(features)
    n = X.shape[0]
    if C < 1:
        raise ConfigError("number of clusters must be >= 1")
    if C > n:
        raise ConfigError(f"cannot form {C} clusters from {n} points")
    if max_iters < 1:
        raise ConfigError("max_iters must be >= 1")
    g = rng(seed)
    centers = _kmeanspp(X, C, g)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        d2 = Centroids(centers).sq_distances(X)
        labels = np.argmin(d2, axis=1)
        d2_assigned = d2[np.arange(n), labels]
        history.append(float(d2_assigned.sum()))
        repaired = _repair_empty(X, centers, labels, d2_assigned, C)
        new = _means(X, labels, C, centers)
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol and not repaired:
            break
    cents = Centroids(centers)
    d2 = cents.sq_distances(X)
    labels = np.argmin(d2, axis=1)
    d2_assigned = d2[np.arange(n), labels]
    if np.bincount(labels, minlength=C).min() == 0:
        # Only reachable with duplicate points; final assignment keeps every
        # cluster nonempty at the cost of exact argmin agreement.
        centers = centers.copy()
        _repair_empty(X, centers, labels, d2_assigned, C)
        cents = Centroids(centers)
    inertia = float(d2_assigned.sum())
    history.append(inertia)
    return KMeansResult(cents, labels, inertia, it, history)


def kmeans_fit(features, C: int, seed: int = 0, max_iters: int = 100, tol: float = 1e-4):
    """Cluster ``features`` into C groups; returns ``(Centroids, assignments)``."""
    res = lloyd(features, C, seed, max_iters, tol)
    return res.centroids, res.assignments
