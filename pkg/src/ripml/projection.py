"""Seeded random projections of sparse label vectors and empirical RIP checks.

A projection ``Phi`` is never stored; a :class:`ProjectionSpec` (ensemble,
``m``, ``L``, seed) rematerializes it bit-for-bit.  Gaussian entries are
N(0, 1/m), i.e. standard deviation ``1/sqrt(m)``, so that
``E ||Phi x||^2 = ||x||^2``.
"""

from __future__ import annotations

import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DimensionError
from .seeding import check_seed, derive_seed, normal_stream, rng, sign_stream
from .sparse import SparseVector

__all__ = [
    "Ensemble",
    "ProjectionSpec",
    "DistortionReport",
    "materialize",
    "project_label",
    "project_labels",
    "rip_check",
]

DEFAULT_QUANTILES = (0.5, 0.9, 0.95, 0.99)


class Ensemble(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    # Test hook: Phi = I (requires m == L).
    IDENTITY = "identity"


@dataclass(frozen=True)
class ProjectionSpec:
    ensemble: Ensemble
    m: int
    L: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ensemble", Ensemble(self.ensemble))
        if self.m < 1:
            raise ConfigError(f"embedding dimension m must be >= 1, got {self.m}")
        if self.m > self.L:
            raise ConfigError(f"embedding dimension m={self.m} exceeds number of labels L={self.L}")
        if self.ensemble is Ensemble.IDENTITY and self.m != self.L:
            raise ConfigError("identity projection requires m == L")
        object.__setattr__(self, "seed", check_seed(self.seed))


def materialize(spec: ProjectionSpec) -> np.ndarray:
    """Return the m x L matrix described by ``spec`` (row-major fill order)."""
    m, L = spec.m, spec.L
    if spec.ensemble is Ensemble.IDENTITY:
        return np.eye(m)
    if spec.ensemble is Ensemble.GAUSSIAN:
        entries = normal_stream(spec.seed, m * L)
    else:
        entries = sign_stream(spec.seed, m * L)
    return (entries / math.sqrt(m)).reshape(m, L)


def _as_matrix(spec_or_matrix) -> np.ndarray:
    if isinstance(spec_or_matrix, ProjectionSpec):
        return materialize(spec_or_matrix)
    return np.asarray(spec_or_matrix, dtype=np.float64)


def project_label(spec_or_matrix, y: SparseVector) -> np.ndarray:
    """Embed a binary label vector: ``Phi y / ||y||_2``.

    Sums the ``s`` selected columns and scales by ``1/sqrt(s)``, O(s m).
    An empty label vector maps to the zero vector.
    """
    phi = _as_matrix(spec_or_matrix)
    if y.dim != phi.shape[1]:
        raise DimensionError(f"label vector has dim {y.dim}, projection expects {phi.shape[1]}")
    if not y.is_binary:
        raise ValueError("project_label expects a binary label vector")
    s = y.nnz
    if s == 0:
        return np.zeros(phi.shape[0])
    return phi[:, y.indices].sum(axis=1) / math.sqrt(s)


def project_labels(spec_or_matrix, Y) -> np.ndarray:
    """Embed every row of an N x L 0/1 matrix; returns N x m.

    Computed as a sparse-dense product, so the cost is O(nnz(Y) m).
    """
    phi = _as_matrix(spec_or_matrix)
    Y = sp.csr_matrix(Y, dtype=np.float64)
    if Y.shape[1] != phi.shape[1]:
        raise DimensionError(f"label matrix has {Y.shape[1]} columns, projection expects {phi.shape[1]}")
    counts = np.diff(Y.indptr)
    scale = np.zeros(Y.shape[0])
    nz = counts > 0
    scale[nz] = 1.0 / np.sqrt(counts[nz])
    Z = np.asarray(Y @ phi.T)
    return Z * scale[:, None]


@dataclass(frozen=True)
class DistortionReport:
    """Empirical distortion ``|ratio - 1|`` over Monte Carlo trials."""

    n_trials: int
    sparsity_k: int
    max_distortion: float
    quantiles: tuple[tuple[float, float], ...]
    mean_ratio: float
    mode: str = "sparse"
    distortions: np.ndarray = field(default=None, repr=False, compare=False)

    def quantile(self, prob: float) -> float:
        for p, q in self.quantiles:
            if p == prob:
                return q
        return float(np.quantile(self.distortions, prob))

    def to_text(self) -> str:
        lines = [
            f"mode={self.mode}",
            f"n_trials={self.n_trials}",
            f"sparsity_k={self.sparsity_k}",
            f"max_distortion={self.max_distortion!r}",
            f"mean_ratio={self.mean_ratio!r}",
        ]
        lines += [f"q{p:g}={q!r}" for p, q in self.quantiles]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("trial,distortion\n")
        for t, dval in enumerate(self.distortions.tolist()):
            buf.write(f"{t},{dval!r}\n")
        return buf.getvalue()


def _sparse_trial(phi, L, k, seed):
    g = rng(seed)
    support = g.choice(L, size=k, replace=False)
    vals = g.standard_normal(k)
    norm = np.linalg.norm(vals)
    while norm == 0.0:
        vals = g.standard_normal(k)
        norm = np.linalg.norm(vals)
    x = vals / norm
    v = phi[:, support] @ x
    # Exactly rounded sums keep the ratio independent of summation order,
    # so an isometry scores exactly 0.
    return math.fsum(v * v) / math.fsum(x * x)


def _pair_trial(phi, L, k, seed):
    g = rng(seed)
    while True:
        a = np.sort(g.choice(L, size=k, replace=False))
        b = np.sort(g.choice(L, size=k, replace=False))
        if not np.array_equal(a, b):
            break
    diff = np.zeros(L)
    diff[a] += 1.0 / math.sqrt(k)
    diff[b] -= 1.0 / math.sqrt(k)
    v = phi @ diff
    return math.fsum(v * v) / math.fsum(diff * diff)


def rip_check(
    spec,
    sparsity_k: int,
    n_trials: int,
    trial_seed: int,
    *,
    mode: str = "sparse",
    quantiles=DEFAULT_QUANTILES,
    threads: int = 1,
) -> DistortionReport:
    """Estimate the RIP constant of a projection by Monte Carlo.

    Parameters
    ----------
    spec : ProjectionSpec or array
        The projection, or an explicit m x L matrix.
    sparsity_k : int
        Support size of the random test vectors.
    n_trials : int
        Number of random vectors (or pairs).
    trial_seed : int
        Trial ``t`` draws from ``derive_seed(trial_seed, "rip", t)``; results do not
        depend on ``threads``.
    mode : {"sparse", "pairs"}
        ``"sparse"``: random k-sparse unit vectors with Gaussian values,
        distortion ``| ||Phi x||^2 / ||x||^2 - 1 |``.  ``"pairs"``: pairs of normalized
        binary k-sparse vectors, distortion
        ``| ||Phi (x - y)||^2 / ||x - y||^2 - 1 |``.
    """
    phi = _as_matrix(spec)
    L = phi.shape[1]
    if not 1 <= sparsity_k <= L:
        raise ConfigError(f"sparsity_k must be in [1, {L}], got {sparsity_k}")
    if n_trials < 1:
        raise ConfigError("n_trials must be >= 1")
    if mode == "sparse":
        trial = _sparse_trial
    elif mode == "pairs":
        if sparsity_k == L:
            raise ConfigError("pairs mode needs sparsity_k < L")
        trial = _pair_trial
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    seeds = [derive_seed(trial_seed, "rip", t) for t in range(n_trials)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            ratios = list(pool.map(lambda s: trial(phi, L, sparsity_k, s), seeds))
    else:
        ratios = [trial(phi, L, sparsity_k, s) for s in seeds]
    ratios = np.asarray(ratios)
    dist = np.abs(ratios - 1.0)
    qs = tuple((float(p), float(np.quantile(dist, p))) for p in sorted(quantiles))
    return DistortionReport(
        n_trials=n_trials,
        sparsity_k=sparsity_k,
        max_distortion=float(dist.max()),
        quantiles=qs,
        mean_ratio=float(ratios.mean()),
        mode=mode,
        distortions=dist,
    )
