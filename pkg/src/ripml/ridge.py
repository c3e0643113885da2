"""Ridge regression from features to embedded labels.

Minimizes::

    f(Psi) = 1/2 * sum_i ||z_i - Psi x_i||^2 + lam * ||Psi||_F^2

The loss carries the 1/2 but the penalty does not, so the normal equations
are ``Psi (X X^T + 2 lam I) = Z X^T``.  To compare with the ``lam/2``
convention, halve ``lam`` here.

Shapes follow the column convention: ``X`` is d x N, ``Z`` is m x N and
``Psi`` is m x d.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ConfigError, DimensionError, DivergenceError, NumericError, SingularSystemError
from .sparse import SparseVector

__all__ = [
    "Regressor",
    "SolveOptions",
    "RidgeFactor",
    "ridge_objective",
    "ridge_gradient",
    "fit_closed_form",
    "fit_gradient_descent",
    "fit",
    "predict_embedding",
    "predict_embeddings",
]

log = logging.getLogger(__name__)

CLOSED_FORM_MAX_D = 20_000


@dataclass(frozen=True, eq=False)
class Regressor:
    psi: np.ndarray
    lam: float
    solver: str = "closed_form"
    n_iters: int = 0

    def __post_init__(self):
        psi = np.array(self.psi, dtype=np.float64, order="C", ndmin=2)
        if not np.all(np.isfinite(psi)):
            raise NumericError("regressor has non-finite entries")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def m(self) -> int:
        return self.psi.shape[0]

    @property
    def d(self) -> int:
        return self.psi.shape[1]

    @cached_property
    def _psi_t(self) -> np.ndarray:
        return np.ascontiguousarray(self.psi.T)


@dataclass(frozen=True)
class SolveOptions:
    lam: float = 0.1
    max_iters: int = 100_000
    tol: float = 1e-18
    step_size: float | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigError("step_size must be > 0")


def _as_feature_matrix(X):
    """Accept d x N dense/sparse arrays; returns a CSR or ndarray."""
    if sp.issparse(X):
        X = sp.csr_matrix(X, dtype=np.float64)
        if not np.all(np.isfinite(X.data)):
            raise NumericError("feature matrix has non-finite entries")
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("feature matrix must be 2-D (d x N)")
    if not np.all(np.isfinite(X)):
        raise NumericError("feature matrix has non-finite entries")
    return X


def _as_targets(Z, n):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != n:
        raise DimensionError(f"Z has {Z.shape[1]} columns but X has {n} points")
    if not np.all(np.isfinite(Z)):
        raise NumericError("target matrix has non-finite entries")
    return Z


def _gram(X) -> np.ndarray:
    G = X @ X.T
    return G.toarray() if sp.issparse(G) else np.asarray(G)


def _cross(Z, X) -> np.ndarray:
    # Z X^T as m x d; X may be sparse.
    return np.asarray((X @ Z.T).T)


def ridge_objective(psi, X, Z, lam) -> float:
    """Exact objective by residuals."""
    X = _as_feature_matrix(X)
    R = np.asarray((X.T @ np.asarray(psi).T).T) - Z
    return 0.5 * float(np.sum(R * R)) + lam * float(np.sum(np.asarray(psi) ** 2))


def ridge_gradient(psi, X, Z, lam) -> np.ndarray:
    """``(Psi X - Z) X^T + 2 lam Psi``."""
    X = _as_feature_matrix(X)
    psi = np.asarray(psi, dtype=np.float64)
    R = np.asarray((X.T @ psi.T).T) - Z
    return np.asarray((X @ R.T).T) + 2.0 * lam * psi


class RidgeFactor:
    """Cholesky factor of ``X X^T + 2 lam I``, reusable for any targets on the same X."""

    def __init__(self, X, lam: float):
        if lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {lam}")
        X = _as_feature_matrix(X)
        d, n = X.shape
        if n < 1:
            raise DimensionError("need at least one training point")
        A = _gram(X)
        A[np.diag_indices(d)] += 2.0 * lam
        try:
            c, lower = scipy.linalg.cho_factor(A, lower=False, check_finite=False)
        except np.linalg.LinAlgError:
            raise SingularSystemError(
                "X X^T + 2*lambda*I is singular; use lambda > 0 (e.g. --lambda 0.1)"
            ) from None
        piv = np.abs(np.diag(c))
        scale = max(float(np.max(np.diag(A))), 1.0)
        if piv.min() ** 2 <= d * np.finfo(float).eps * scale:
            raise SingularSystemError(
                "X X^T + 2*lambda*I is numerically singular; use lambda > 0 (e.g. --lambda 0.1)"
            )
        self.X = X
        self.lam = float(lam)
        self._factor = (c, lower)

    def solve(self, Z) -> Regressor:
        Z = _as_targets(Z, self.X.shape[1])
        B = np.asarray(self.X @ Z.T)  # d x m
        psi_t = scipy.linalg.cho_solve(self._factor, B, check_finite=False)
        return Regressor(psi_t.T, self.lam, "closed_form")


def fit_closed_form(X, Z, lam: float) -> Regressor:
    """Solve the normal equations by Cholesky; one factorization for all m rows.

    Raises
    ------
    SingularSystemError
        If ``X X^T + 2 lam I`` is not numerically positive definite (only
        possible with ``lam == 0``).
    """
    return RidgeFactor(X, lam).solve(Z)


def _power_lambda_max(G: np.ndarray, iters: int = 50) -> float:
    v = np.ones(G.shape[0]) / np.sqrt(G.shape[0])
    est = 0.0
    for _ in range(iters):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = float(v @ w)
        v = w / nrm
    return max(est, float(v @ (G @ v)))


def fit_gradient_descent(X, Z, opts: SolveOptions = SolveOptions()) -> Regressor:
    """Full-batch gradient descent from ``Psi = 0``.

    Stops when the objective decreases by less than ``opts.tol`` in one step
    or after ``opts.max_iters`` steps.  The per-step decrease of a quadratic
    is ``eta ||G||^2 - eta^2/2 <G H, G>`` with ``H = X X^T + 2 lam I``; it is
    evaluated in that form, free of the cancellation in differencing two
    objective values, so tolerances far below the objective's roundoff are
    meaningful.  The best iterate is returned, so the objective never exceeds
    its value at zero.

    Raises
    ------
    DivergenceError
        After 5 consecutive objective increases.
    """
    X = _as_feature_matrix(X)
    d, n = X.shape
    Z = _as_targets(Z, n)
    lam = opts.lam
    G = _gram(X)
    B = _cross(Z, X)
    step = opts.step_size
    if step is None:
        step = 1.0 / (_power_lambda_max(G) + 2.0 * lam + 1e-300)
    psi = np.zeros_like(B)
    # Objective relative to its value at zero.
    f = 0.0
    best, best_f = psi, f
    increases = 0
    it = 0
    for it in range(1, opts.max_iters + 1):
        grad = psi @ G - B + 2.0 * lam * psi
        gg = float(np.sum(grad * grad))
        ghg = float(np.sum((grad @ G) * grad)) + 2.0 * lam * gg
        delta = step * gg - 0.5 * step * step * ghg
        psi = psi - step * grad
        if not (np.isfinite(delta) and np.all(np.isfinite(psi))):
            raise DivergenceError(f"objective became non-finite with step size {step:g}")
        f -= delta
        if f < best_f:
            best, best_f = psi, f
        if delta < 0:
            increases += 1
            if increases >= 5:
                raise DivergenceError(f"objective increased 5 iterations in a row; step size {step:g} is too large")
            continue
        increases = 0
        if delta < opts.tol:
            break
    log.debug("gradient descent stopped after %d iterations", it)
    return Regressor(best, float(lam), "gradient_descent", n_iters=it)


def fit(X, Z, lam: float = 0.1, solver: str = "closed_form", options: SolveOptions | None = None) -> Regressor:
    if solver == "closed_form":
        return fit_closed_form(X, Z, lam)
    if solver == "gradient_descent":
        opts = options or SolveOptions(lam=lam)
        if opts.lam != lam:
            opts = SolveOptions(lam, opts.max_iters, opts.tol, opts.step_size)
        return fit_gradient_descent(X, Z, opts)
    raise ConfigError(f"unknown solver {solver!r}")


def predict_embeddings(r: Regressor, X) -> np.ndarray:
    """Embed every row of an N x d sparse feature matrix; returns N x m."""
    X = sp.csr_matrix(X, dtype=np.float64)
    if X.shape[1] != r.d:
        raise DimensionError(f"features have dim {X.shape[1]}, regressor expects {r.d}")
    return np.asarray(X @ r._psi_t)


def predict_embedding(r: Regressor, x: SparseVector) -> np.ndarray:
    """``Psi x`` by gathering the columns of Psi on x's support."""
    if x.dim != r.d:
        raise DimensionError(f"feature vector has dim {x.dim}, regressor expects {r.d}")
    row = sp.csr_matrix((x.values, x.indices, [0, x.nnz]), shape=(1, x.dim))
    return predict_embeddings(r, row)[0]
