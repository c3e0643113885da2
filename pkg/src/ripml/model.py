"""Training and inference for RIPML ensembles, flat and cluster-sharded.

Training learner ``f`` (of ``F``):

1. ``Phi_f`` from ``ProjectionSpec(seed=derive_seed(master_seed, "learner", f))``.
2. ``z_i = Phi_f y_i / ||y_i||`` for every training point with labels.
3. ``Psi_f`` by ridge regression of ``z_i`` on ``x_i``.
4. An exact kNN index over the ``z_i``.

Inference for ``x``: query each learner's index with ``Psi_f x``, pool the
``F k`` neighbors, score ``D = (label counts) / (F k)`` and return the top
``p`` labels with positive score (ties to the lower label id).

Points without labels are excluded from training and from the neighbor pool.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError, DimensionError
from .kmeans import Centroids, as_csr, assign_batch, lloyd
from .neighbors import EmbeddedIndex, Metric, knn_batch
from .projection import Ensemble, ProjectionSpec, project_labels
from .ridge import Regressor, RidgeFactor, SolveOptions, fit_gradient_descent, predict_embeddings
from .seeding import derive_seed
from .sparse import Dataset, SparseVector

__all__ = [
    "Hyper",
    "Learner",
    "Model",
    "ClusteredModel",
    "Prediction",
    "train",
    "predict",
    "train_clustered",
    "predict_clustered",
    "learner_seed",
    "top_p",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyper:
    """Hyperparameters; defaults F=5, k=5, p=5, lambda=0.1."""

    m: int
    learners: int = 5
    lam: float = 0.1
    metric: Metric = Metric.SQUARED_EUCLIDEAN
    k: int = 5
    p: int = 5
    ensemble: Ensemble = Ensemble.GAUSSIAN
    solver: str = "closed_form"
    max_iters: int = 100_000
    tol: float = 1e-18
    step_size: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "ensemble", Ensemble(self.ensemble))
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.learners < 1:
            raise ConfigError(f"number of learners F must be >= 1, got {self.learners}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.p < 1:
            raise ConfigError(f"p must be >= 1, got {self.p}")
        if self.solver not in ("closed_form", "gradient_descent"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        SolveOptions(self.lam, self.max_iters, self.tol, self.step_size)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "learners": self.learners,
            "lam": self.lam,
            "metric": self.metric.value,
            "k": self.k,
            "p": self.p,
            "ensemble": self.ensemble.value,
            "solver": self.solver,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "step_size": self.step_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Learner:
    projection: ProjectionSpec
    regressor: Regressor
    index: EmbeddedIndex

    def __post_init__(self):
        if not (self.projection.m == self.regressor.m == self.index.dim):
            raise DimensionError("learner components disagree on m")


@dataclass(frozen=True, eq=False)
class Prediction:
    """Score vector D over all labels and the ranked top labels."""

    scores: np.ndarray
    top_labels: np.ndarray
    requested: int
    clamped_k: bool = False

    @property
    def top_scores(self) -> np.ndarray:
        return self.scores[self.top_labels]

    @property
    def missing(self) -> int:
        """How many of the ``requested`` labels could not be emitted (score 0)."""
        return self.requested - int(self.top_labels.size)

    @property
    def shortfall(self) -> bool:
        return self.missing > 0


def learner_seed(master_seed: int, f: int) -> int:
    return derive_seed(master_seed, "learner", f)


def top_p(scores: np.ndarray, p: int) -> np.ndarray:
    """Ids of the p largest positive scores, ties to the lower id."""
    pos = np.flatnonzero(scores > 0)
    order = np.lexsort((pos, -scores[pos]))
    return pos[order[:p]]


class Model:
    """F learners sharing one training label matrix Y (N x L)."""

    def __init__(self, learners, labels, hyper: Hyper, n_features: int, excluded=(), master_seed=None):
        learners = list(learners)
        if not learners:
            raise ConfigError("a model needs at least one learner")
        labels = sp.csr_matrix(labels, dtype=np.float64)
        self.learners = learners
        self.labels = labels
        self.hyper = hyper
        self.n_features = int(n_features)
        self.excluded = np.asarray(excluded, dtype=np.int64)
        self.master_seed = master_seed
        for lr in learners:
            if lr.regressor.d != self.n_features:
                raise DimensionError("learner feature dimension disagrees with model")
            if lr.projection.L != labels.shape[1]:
                raise DimensionError("learner label dimension disagrees with model")
            if lr.index.point_ids.size and lr.index.point_ids.max() >= labels.shape[0]:
                raise DimensionError("index refers to points outside the label matrix")

    @property
    def n_labels(self) -> int:
        return self.labels.shape[1]

    @property
    def n_points(self) -> int:
        return self.labels.shape[0]

    @property
    def F(self) -> int:
        return len(self.learners)

    def neighbor_counts(self, X, k: int, threads: int = 1):
        """Label counts over the pooled F*k neighbors; returns (counts b x L, k_eff, clamped)."""
        X = as_csr(X)
        if X.shape[1] != self.n_features:
            raise DimensionError(f"features have dim {X.shape[1]}, model expects {self.n_features}")
        b = X.shape[0]
        pooled = []
        clamped = False
        for lr in self.learners:
            Q = predict_embeddings(lr.regressor, X)
            ids, _, cl = knn_batch(lr.index, Q, k, threads=threads)
            clamped |= cl
            pooled.append(ids)
        ids = np.concatenate(pooled, axis=1)
        k_eff = pooled[0].shape[1]
        rows = np.repeat(np.arange(b), ids.shape[1])
        sel = sp.csr_matrix((np.ones(ids.size), (rows, ids.reshape(-1))), shape=(b, self.n_points))
        counts = np.asarray((sel @ self.labels).todense())
        return counts, k_eff, clamped

    def predict_many(self, X, k: int | None = None, p: int | None = None, threads: int = 1) -> list[Prediction]:
        k = self.hyper.k if k is None else k
        p = self.hyper.p if p is None else p
        if k < 1 or p < 1:
            raise ConfigError("k and p must be >= 1")
        counts, k_eff, clamped = self.neighbor_counts(X, k, threads)
        denom = float(self.F * k_eff)
        out = []
        for row in counts:
            out.append(Prediction(row / denom, top_p(row, p), p, clamped))
        return out

    def predict(self, x: SparseVector, k: int | None = None, p: int | None = None) -> Prediction:
        if x.dim != self.n_features:
            raise DimensionError(f"feature vector has dim {x.dim}, model expects {self.n_features}")
        return self.predict_many([x], k, p)[0]


class ClusteredModel:
    """KMeans shards of the training set, each with its own Model."""

    def __init__(self, centroids: Centroids, models, cluster_members=None):
        models = list(models)
        if len(models) != centroids.C:
            raise ConfigError(f"{len(models)} models for {centroids.C} clusters")
        self.centroids = centroids
        self.models = models
        self.cluster_members = cluster_members
        dims = {(mdl.n_features, mdl.n_labels) for mdl in models}
        if len(dims) != 1:
            raise DimensionError("cluster models disagree on dimensions")
        if centroids.dim != models[0].n_features:
            raise DimensionError("centroid dimension disagrees with models")

    @property
    def C(self) -> int:
        return self.centroids.C

    @property
    def n_features(self) -> int:
        return self.models[0].n_features

    @property
    def n_labels(self) -> int:
        return self.models[0].n_labels

    @property
    def hyper(self) -> Hyper:
        return self.models[0].hyper

    @property
    def master_seed(self):
        return self.models[0].master_seed

    def route(self, X) -> np.ndarray:
        return assign_batch(self.centroids, as_csr(X))

    def predict_many(self, X, k: int | None = None, p: int | None = None, threads: int = 1) -> list[Prediction]:
        X = as_csr(X)
        if X.shape[1] != self.n_features:
            raise DimensionError(f"features have dim {X.shape[1]}, model expects {self.n_features}")
        route = self.route(X)
        out: list[Prediction | None] = [None] * X.shape[0]
        for c in np.unique(route):
            rows = np.flatnonzero(route == c)
            for r, pred in zip(rows, self.models[c].predict_many(X[rows], k, p, threads)):
                out[r] = pred
        return out

    def predict(self, x: SparseVector, k: int | None = None, p: int | None = None) -> Prediction:
        if x.dim != self.n_features:
            raise DimensionError(f"feature vector has dim {x.dim}, model expects {self.n_features}")
        return self.predict_many([x], k, p)[0]


def _fit_learner(f, master_seed, hyper, n_labels, X_in, Y_in, point_ids, factor):
    spec = ProjectionSpec(hyper.ensemble, hyper.m, n_labels, learner_seed(master_seed, f))
    Z = project_labels(spec, Y_in)  # N_in x m
    if factor is not None:
        reg = factor.solve(Z.T)
    else:
        opts = SolveOptions(hyper.lam, hyper.max_iters, hyper.tol, hyper.step_size)
        reg = fit_gradient_descent(X_in.T, Z.T, opts)
    return Learner(spec, reg, EmbeddedIndex(Z, point_ids, hyper.metric))


def train(data: Dataset, hyper: Hyper, master_seed: int = 0, threads: int = 1) -> Model:
    """Train F independently seeded learners on ``data``."""
    if hyper.m > data.n_labels:
        raise ConfigError(f"m={hyper.m} exceeds the number of labels L={data.n_labels}")
    mask = ~data.zero_label_mask
    excluded = np.flatnonzero(~mask)
    if not mask.any():
        raise DataError("every training point has an empty label set")
    if excluded.size:
        log.info("excluding %d training points with no labels", excluded.size)
    point_ids = np.flatnonzero(mask)
    X_in = data.feature_matrix[point_ids]
    Y_in = data.label_matrix[point_ids]
    factor = None
    if hyper.solver == "closed_form":
        factor = RidgeFactor(X_in.T.tocsr(), hyper.lam)

    def work(f):
        return _fit_learner(f, master_seed, hyper, data.n_labels, X_in, Y_in, point_ids, factor)

    if threads > 1 and hyper.learners > 1:
        with ThreadPoolExecutor(threads) as pool:
            learners = list(pool.map(work, range(hyper.learners)))
    else:
        learners = [work(f) for f in range(hyper.learners)]
    return Model(learners, data.label_matrix, hyper, data.n_features, excluded, master_seed)


def predict(model: Model, x_new: SparseVector, k: int | None = None, p: int | None = None) -> Prediction:
    return model.predict(x_new, k, p)


def train_clustered(
    data: Dataset,
    hyper: Hyper,
    C: int,
    master_seed: int = 0,
    *,
    kmeans_max_iters: int = 100,
    kmeans_tol: float = 1e-4,
    threads: int = 1,
) -> ClusteredModel:
    """Cluster the training features into C shards and train one Model per shard.

    Every shard uses the same master seed, so ``C == 1`` reproduces
    :func:`train` exactly.  Raises ``ConfigError`` if a shard keeps fewer
    labeled points than ``hyper.k``.
    """
    if C < 1:
        raise ConfigError("number of clusters must be >= 1")
    X = data.feature_matrix
    if C == 1:
        centroids = Centroids(np.asarray(X.mean(axis=0)).reshape(1, -1))
        assignments = np.zeros(data.n_points, dtype=np.int64)
    else:
        res = lloyd(X, C, derive_seed(master_seed, "kmeans"), kmeans_max_iters, kmeans_tol)
        centroids, assignments = res.centroids, res.assignments
    labeled = ~data.zero_label_mask
    members = []
    for c in range(C):
        idx = np.flatnonzero(assignments == c)
        n_lab = int(labeled[idx].sum())
        if n_lab < max(hyper.k, 1):
            raise ConfigError(
                f"cluster {c} has {n_lab} labeled points, fewer than k={hyper.k}; use fewer clusters"
            )
        members.append(idx)
    models = [train(data.subset(idx), hyper, master_seed, threads) for idx in members]
    return ClusteredModel(centroids, models, members)


def predict_clustered(cm: ClusteredModel, x_new: SparseVector, k: int | None = None, p: int | None = None) -> Prediction:
    return cm.predict(x_new, k, p)
