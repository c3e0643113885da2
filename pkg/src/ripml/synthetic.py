"""Seeded synthetic multilabel data with cluster-specific labels.

Points come from ``n_clusters`` well-separated Gaussian blobs in R^d.  Each
cluster owns a private block of ``labels_per_cluster`` labels; a point in
cluster ``c`` with offset ``u`` from its center carries the
``active_labels`` labels of block ``c`` whose cluster-specific directions
``w`` score highest on ``u``.  One global linear map cannot serve every
cluster's directions at once, so per-cluster models should win.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .seeding import rng
from .sparse import Dataset

__all__ = ["sharded_dataset"]


def sharded_dataset(
    n_clusters: int = 8,
    n_features: int = 20,
    labels_per_cluster: int = 10,
    active_labels: int = 2,
    n_train: int = 2400,
    n_test: int = 800,
    separation: float = 10.0,
    seed: int = 0,
) -> tuple[Dataset, Dataset]:
    """Return ``(train, test)`` drawn from one shared generative model."""
    if n_clusters < 1 or n_features < 1 or labels_per_cluster < 1:
        raise ConfigError("cluster, feature and label counts must be >= 1")
    if not 1 <= active_labels <= labels_per_cluster:
        raise ConfigError("active_labels must be in [1, labels_per_cluster]")
    if n_train < 1 or n_test < 1:
        raise ConfigError("n_train and n_test must be >= 1")
    g = rng(seed)
    centers = separation * g.standard_normal((n_clusters, n_features))
    W = g.standard_normal((n_clusters, labels_per_cluster, n_features))
    L = n_clusters * labels_per_cluster

    def draw(n):
        c = g.integers(n_clusters, size=n)
        u = g.standard_normal((n, n_features))
        scores = np.einsum("nd,nbd->nb", u, W[c])
        top = np.argsort(-scores, axis=1, kind="stable")[:, :active_labels]
        Y = np.zeros((n, L))
        Y[np.arange(n)[:, None], c[:, None] * labels_per_cluster + top] = 1.0
        return Dataset.from_matrices(centers[c] + u, Y)

    return draw(n_train), draw(n_test)
