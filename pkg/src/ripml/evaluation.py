"""Precision@K evaluation, baselines and parameter sweeps.

Sweep output is split in two so that reruns are value-exact: the runs and
summary CSVs hold configuration and metrics only, wall-clock times go to a
separate timings CSV.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DataError, DimensionError
from .kmeans import as_csr
from .model import Hyper, Prediction, top_p, train, train_clustered
from .neighbors import select_smallest
from .seeding import derive_seed, rng
from .sparse import Dataset, SparseVector

__all__ = [
    "precision_at_k",
    "EvalResult",
    "evaluate",
    "FeatureKNN",
    "RandomPredictor",
    "split_dataset",
    "resolve_m",
    "SweepPlan",
    "SweepResult",
    "run_sweep",
]

log = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5)


def precision_at_k(true_labels, ranked_prediction: Sequence[int], K: int) -> float:
    """Fraction of the first K ranked labels that are true; short lists count as misses."""
    if K < 1:
        raise ConfigError("K must be >= 1")
    if isinstance(true_labels, SparseVector):
        truth = set(true_labels.indices.tolist())
    else:
        truth = set(int(t) for t in true_labels)
    hits = sum(1 for lab in list(ranked_prediction)[:K] if int(lab) in truth)
    return hits / K


@dataclass
class EvalResult:
    p_at: dict[int, float]
    n_test: int
    n_excluded: int
    train_seconds: float = 0.0
    test_seconds: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def ms_per_point(self) -> float:
        total = self.n_test + self.n_excluded
        return 1000.0 * self.test_seconds / total if total else 0.0

    def report(self) -> str:
        lines = [f"n_test={self.n_test}", f"n_test_excluded={self.n_excluded}"]
        lines += [f"P@{K}={v:.6f}" for K, v in sorted(self.p_at.items())]
        lines += [f"train_seconds={self.train_seconds:.3f}", f"test_seconds={self.test_seconds:.3f}"]
        lines += [f"ms_per_point={self.ms_per_point:.3f}"]
        lines += [f"{k}={v}" for k, v in sorted(self.config.items())]
        return "\n".join(lines) + "\n"


def evaluate(predictor, test: Dataset, Ks=DEFAULT_KS, k: int | None = None, threads: int = 1) -> EvalResult:
    """Mean P@K over the test points that carry labels.

    ``predictor`` is anything with ``predict_many(X, k=..., p=...)`` returning
    Predictions (``Model``, ``ClusteredModel``, ``FeatureKNN``, ...).
    """
    Ks = sorted(set(int(K) for K in Ks))
    if not Ks or Ks[0] < 1:
        raise ConfigError("Ks must be positive")
    if test.n_points == 0:
        raise DataError("test set is empty")
    if test.n_features != predictor.n_features or test.n_labels != predictor.n_labels:
        raise DimensionError(
            f"test set is d={test.n_features}, L={test.n_labels}; "
            f"model is d={predictor.n_features}, L={predictor.n_labels}"
        )
    t0 = time.perf_counter()
    preds = predictor.predict_many(test.feature_matrix, k=k, p=max(Ks), threads=threads)
    elapsed = time.perf_counter() - t0
    keep = ~test.zero_label_mask
    sums = {K: 0.0 for K in Ks}
    for y, pred, ok in zip(test.labels, preds, keep):
        if not ok:
            continue
        for K in Ks:
            sums[K] += precision_at_k(y, pred.top_labels, K)
    n = int(keep.sum())
    if n == 0:
        raise DataError("no test point carries labels")
    return EvalResult({K: sums[K] / n for K in Ks}, n, int((~keep).sum()), test_seconds=elapsed,
                      config=_config_echo(predictor, k))


def _config_echo(predictor, k) -> dict:
    hyper = getattr(predictor, "hyper", None)
    if hyper is None:
        return {}
    return {
        "m": hyper.m,
        "k": hyper.k if k is None else k,
        "learners": hyper.learners,
        "lambda": hyper.lam,
        "clusters": getattr(predictor, "C", 1),
        "metric": hyper.metric.value,
        "seed": getattr(predictor, "master_seed", None),
    }


class FeatureKNN:
    """Ablation: kNN directly on the (sparse) features, squared Euclidean distance.

    Scores are label counts over the k neighbors divided by k; ties in
    distance go to the lower training index, ties in score to the lower label.
    """

    def __init__(self, train: Dataset, k: int = 5, p: int = 5):
        mask = ~train.zero_label_mask
        self.point_ids = np.flatnonzero(mask)
        self.X = train.feature_matrix[self.point_ids]
        self.Y = train.label_matrix[self.point_ids]
        self.sq = np.asarray(self.X.multiply(self.X).sum(axis=1)).reshape(-1)
        self.k, self.p = k, p
        self.n_features, self.n_labels = train.n_features, train.n_labels

    def predict_many(self, X, k=None, p=None, threads: int = 1) -> list[Prediction]:
        k = self.k if k is None else k
        p = self.p if p is None else p
        X = as_csr(X)
        k_eff = min(k, self.X.shape[0])
        ids = np.arange(self.X.shape[0])
        out = []
        for s in range(0, X.shape[0], 512):
            Q = X[s:s + 512]
            qq = np.asarray(Q.multiply(Q).sum(axis=1)).reshape(-1)
            d2 = qq[:, None] - 2.0 * np.asarray((Q @ self.X.T).todense()) + self.sq[None, :]
            for row in d2:
                nb = select_smallest(row, ids, k_eff)
                counts = np.asarray(self.Y[nb].sum(axis=0)).reshape(-1)
                out.append(Prediction(counts / k_eff, top_p(counts, p), p, k_eff < k))
        return out


class RandomPredictor:
    """Ranks labels by a fresh uniform permutation per query (analytic baseline)."""

    def __init__(self, n_features: int, n_labels: int, seed: int = 0):
        self.n_features, self.n_labels = n_features, n_labels
        self._rng = rng(seed)

    def predict_many(self, X, k=None, p=5, threads: int = 1) -> list[Prediction]:
        X = as_csr(X)
        out = []
        for _ in range(X.shape[0]):
            top = self._rng.permutation(self.n_labels)[:p]
            scores = np.zeros(self.n_labels)
            scores[top] = 1.0
            out.append(Prediction(scores, top, p))
        return out


def split_dataset(data: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split into (train, test)."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must be in (0, 1)")
    perm = rng(seed).permutation(data.n_points)
    n_train = int(round(train_fraction * data.n_points))
    if n_train in (0, data.n_points):
        raise ConfigError("split leaves an empty side")
    return data.subset(np.sort(perm[:n_train])), data.subset(np.sort(perm[n_train:]))


def resolve_m(value, n_labels: int) -> int:
    """Embedding dimension from an int or a fraction of L (``"0.2L"`` or ``"20%"``)."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    s = str(value).strip()
    if s.endswith("L"):
        return max(1, int(round(float(s[:-1]) * n_labels)))
    if s.endswith("%"):
        return max(1, int(round(float(s[:-1]) / 100.0 * n_labels)))
    return int(s)


AXES = ("m", "k", "C", "d")


@dataclass(frozen=True)
class SweepPlan:
    axis: str
    values: tuple
    hyper: Hyper
    repeats: int = 1
    seed: int = 0
    clusters: int = 1
    Ks: tuple = DEFAULT_KS
    # Used only when no test set is supplied: each repeat draws a new split.
    train_fraction: float = 0.9

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"sweep axis must be one of {AXES}, got {self.axis!r}")
        vals = tuple(self.values)
        if not vals:
            raise ConfigError("sweep values must be nonempty")
        if len(set(map(str, vals))) != len(vals):
            raise ConfigError("sweep values must be distinct")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        object.__setattr__(self, "values", vals)


@dataclass
class SweepResult:
    axis: str
    Ks: tuple
    runs: list[dict]
    timings: list[dict]

    @property
    def run_columns(self) -> list[str]:
        return [
            "axis", "value", "repeat", "seed", "m", "k", "learners", "lambda",
            "clusters", "metric", "d", "n_train", "n_test", "n_test_excluded",
        ] + [f"p@{K}" for K in self.Ks]

    @property
    def summary_columns(self) -> list[str]:
        cols = ["axis", "value", "repeats"]
        for K in self.Ks:
            cols += [f"p@{K}_mean", f"p@{K}_std"]
        return cols

    def summary(self) -> list[dict]:
        """Per axis value: mean and sample std (ddof=1; 0 for one repeat) over repeats."""
        order, groups = [], {}
        for r in self.runs:
            key = r["value"]
            if key not in groups:
                order.append(key)
                groups[key] = []
            groups[key].append(r)
        out = []
        for key in order:
            rows = groups[key]
            row = {"axis": self.axis, "value": key, "repeats": len(rows)}
            for K in self.Ks:
                vals = np.array([r[f"p@{K}"] for r in rows])
                row[f"p@{K}_mean"] = float(vals.mean())
                row[f"p@{K}_std"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            out.append(row)
        return out

    @staticmethod
    def _csv(columns, rows) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in columns})
        return buf.getvalue()

    def runs_csv(self) -> str:
        return self._csv(self.run_columns, self.runs)

    def summary_csv(self) -> str:
        return self._csv(self.summary_columns, self.summary())

    def timings_csv(self) -> str:
        return self._csv(["axis", "value", "repeat", "train_seconds", "test_seconds", "ms_per_point"], self.timings)

    def report(self) -> str:
        """Plain-text table: one row per axis value, P@K as mean +- std in percent."""
        head = f"{self.axis:>8} " + " ".join(f"{'P@' + str(K):>15}" for K in self.Ks)
        lines = [head, "-" * len(head)]
        for row in self.summary():
            cells = " ".join(
                f"{100 * row[f'p@{K}_mean']:7.2f} +- {100 * row[f'p@{K}_std']:4.2f}" for K in self.Ks
            )
            lines.append(f"{str(row['value']):>8} {cells}")
        return "\n".join(lines) + "\n"


def run_sweep(
    plan: SweepPlan,
    train_data: Dataset | None = None,
    test_data: Dataset | None = None,
    *,
    datasets: dict | Callable | None = None,
    threads: int = 1,
) -> SweepResult:
    """Train and evaluate once per axis value and repeat.

    Repeat ``r`` trains with ``derive_seed(plan.seed, "repeat", r)`` for every
    axis value.  Without ``test_data`` the training set is re-split per repeat
    with ``derive_seed(plan.seed, "split", r)``.  For ``axis == "d"`` the
    datasets come from ``datasets[value]`` (a dict or callable returning
    ``(train, test_or_None)``).
    """
    runs, timings = [], []
    for value in plan.values:
        if plan.axis == "d":
            if datasets is None:
                raise ConfigError("a d-sweep needs one dataset per value")
            pair = datasets(value) if callable(datasets) else datasets[value]
            tr_full, te_full = pair
        else:
            tr_full, te_full = train_data, test_data
        if tr_full is None:
            raise ConfigError("no training data")
        for r in range(plan.repeats):
            seed = derive_seed(plan.seed, "repeat", r)
            if te_full is None:
                tr, te = split_dataset(tr_full, plan.train_fraction, derive_seed(plan.seed, "split", r))
            else:
                tr, te = tr_full, te_full
            hyper, C = plan.hyper, plan.clusters
            if plan.axis == "m":
                hyper = replace(hyper, m=resolve_m(value, tr.n_labels))
            elif plan.axis == "k":
                hyper = replace(hyper, k=int(value))
            elif plan.axis == "C":
                C = int(value)
            t0 = time.perf_counter()
            if C == 1:
                model = train(tr, hyper, seed, threads)
            else:
                model = train_clustered(tr, hyper, C, seed, threads=threads)
            t_train = time.perf_counter() - t0
            res = evaluate(model, te, plan.Ks, threads=threads)
            res.train_seconds = t_train
            row = {
                "axis": plan.axis,
                "value": value,
                "repeat": r,
                "seed": seed,
                "m": hyper.m,
                "k": hyper.k,
                "learners": hyper.learners,
                "lambda": hyper.lam,
                "clusters": C,
                "metric": hyper.metric.value,
                "d": tr.n_features,
                "n_train": tr.n_points,
                "n_test": res.n_test,
                "n_test_excluded": res.n_excluded,
            }
            row.update({f"p@{K}": res.p_at[K] for K in plan.Ks})
            runs.append(row)
            timings.append({
                "axis": plan.axis, "value": value, "repeat": r,
                "train_seconds": res.train_seconds, "test_seconds": res.test_seconds,
                "ms_per_point": res.ms_per_point,
            })
            log.info("sweep %s=%s repeat %d: %s", plan.axis, value, r,
                     ", ".join(f"P@{K}={res.p_at[K]:.4f}" for K in plan.Ks))
    return SweepResult(plan.axis, tuple(plan.Ks), runs, timings)
