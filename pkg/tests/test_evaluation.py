import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ripml.errors import ConfigError, DataError, DimensionError
from ripml.evaluation import (
    FeatureKNN,
    RandomPredictor,
    SweepPlan,
    evaluate,
    precision_at_k,
    resolve_m,
    run_sweep,
    split_dataset,
)
from ripml.model import Hyper, train
from ripml.seeding import derive_seed
from ripml.sparse import Dataset, SparseVector
from ripml.synthetic import sharded_dataset


def test_precision_examples():
    assert precision_at_k([2, 5], [5, 1, 2], 1) == 1.0
    assert precision_at_k([2, 5], [5, 1, 2], 3) == pytest.approx(2 / 3)
    assert precision_at_k([2, 5], [0, 1], 2) == 0.0
    assert precision_at_k(SparseVector.indicator(9, [3, 4, 8]), [8, 4, 3], 3) == 1.0
    # Short lists count as misses.
    assert precision_at_k([1], [1], 5) == 0.2
    with pytest.raises(ConfigError):
        precision_at_k([1], [1], 0)


@settings(max_examples=200, deadline=None)
@given(
    st.sets(st.integers(0, 19), max_size=8),
    st.lists(st.integers(0, 19), max_size=10, unique=True),
    st.integers(1, 10),
    st.permutations(range(20)),
)
def test_precision_bounds_and_relabel_invariance(truth, ranked, K, perm):
    v = precision_at_k(truth, ranked, K)
    assert 0.0 <= v <= 1.0
    assert precision_at_k({perm[t] for t in truth}, [perm[r] for r in ranked], K) == v


def identity_data(n=8, seed=0):
    g = np.random.default_rng(seed)
    Y = (g.random((n, n)) < 0.3).astype(float)
    Y[np.arange(n), np.arange(n)] = 1.0
    return Dataset.from_matrices(np.eye(n), Y)


def test_memorization_on_identity_pipeline():
    data = identity_data()
    model = train(data, Hyper(m=8, learners=1, lam=0.0, ensemble="identity", k=1))
    res = evaluate(model, data, Ks=(1,))
    assert res.p_at[1] == 1.0 and res.n_test == 8 and res.n_excluded == 0
    assert res.config["m"] == 8 and res.config["clusters"] == 1 and res.config["seed"] == 0


def test_zero_label_test_points_are_counted_separately():
    data = identity_data()
    X = np.eye(8)[:3]
    Y = np.zeros((3, 8))
    Y[0, 0] = 1.0
    test = Dataset.from_matrices(X, Y)
    model = train(data, Hyper(m=8, learners=1, lam=0.0, ensemble="identity", k=1))
    res = evaluate(model, test, Ks=(1,))
    assert res.n_test == 1 and res.n_excluded == 2 and res.p_at[1] == 1.0
    assert "n_test_excluded=2" in res.report()
    with pytest.raises(DataError):
        evaluate(model, Dataset.from_matrices(X[1:], Y[1:]))
    with pytest.raises(DataError):
        evaluate(model, Dataset.from_matrices(np.zeros((0, 8)), np.zeros((0, 8))))
    with pytest.raises(DimensionError):
        evaluate(model, Dataset.from_matrices(np.eye(3), np.eye(3)))


def test_random_guess_baseline_within_three_sigma():
    L, s, n = 40, 3, 4000
    g = np.random.default_rng(5)
    Y = np.zeros((n, L))
    for i in range(n):
        Y[i, g.choice(L, s, replace=False)] = 1.0
    test = Dataset.from_matrices(np.ones((n, 1)), Y)
    res = evaluate(RandomPredictor(1, L, seed=3), test, Ks=(1,))
    p = s / L
    assert abs(res.p_at[1] - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_feature_knn_ablation():
    tr, te = sharded_dataset(n_clusters=3, n_train=300, n_test=60, seed=1)
    ab = FeatureKNN(tr, k=5)
    res = evaluate(ab, te)
    assert all(0.0 <= v <= 1.0 for v in res.p_at.values())
    # Brute-force check of one query.
    X = tr.feature_matrix.toarray()
    q = te.feature_matrix.toarray()[0]
    d = ((X - q) ** 2).sum(axis=1)
    nb = sorted(range(len(d)), key=lambda i: (d[i], i))[:5]
    counts = tr.label_matrix.toarray()[nb].sum(axis=0)
    np.testing.assert_allclose(ab.predict_many(te.feature_matrix[:1])[0].scores, counts / 5)


def test_evaluate_is_deterministic():
    tr, te = sharded_dataset(n_clusters=3, n_train=300, n_test=60, seed=2)
    model = train(tr, Hyper(m=10), 1)
    assert evaluate(model, te).p_at == evaluate(model, te, threads=2).p_at


def test_split_dataset():
    data = identity_data(20)
    a, b = split_dataset(data, 0.75, 4)
    assert (a.n_points, b.n_points) == (15, 5)
    a2, _ = split_dataset(data, 0.75, 4)
    assert a == a2
    with pytest.raises(ConfigError):
        split_dataset(data, 1.0, 0)


def test_resolve_m():
    assert resolve_m(50, 159) == 50
    assert resolve_m("0.2L", 159) == 32
    assert resolve_m("40%", 159) == 64
    assert resolve_m("100", 159) == 100


def test_sweep_plan_validation():
    h = Hyper(m=2)
    for kw in ({"axis": "q", "values": (1,)}, {"axis": "m", "values": ()},
               {"axis": "m", "values": (1, 1)}, {"axis": "m", "values": (1,), "repeats": 0}):
        with pytest.raises(ConfigError):
            SweepPlan(hyper=h, **kw)


@pytest.fixture(scope="module")
def small_sweep():
    tr, te = sharded_dataset(n_clusters=3, n_train=300, n_test=60, seed=3)
    plan = SweepPlan("m", (5, 10), Hyper(m=1), repeats=2, seed=7)
    return plan, tr, te, run_sweep(plan, tr, te)


def test_sweep_bookkeeping(small_sweep):
    plan, tr, te, res = small_sweep
    runs = list(csv.DictReader(io.StringIO(res.runs_csv())))
    summary = list(csv.DictReader(io.StringIO(res.summary_csv())))
    assert len(runs) == 4 and len(summary) == 2
    assert list(runs[0]) == res.run_columns
    assert [r["m"] for r in runs] == ["5", "5", "10", "10"]
    for row in summary:
        vals = [float(r["p@1"]) for r in runs if r["value"] == row["value"]]
        assert float(row["p@1_mean"]) == pytest.approx(np.mean(vals))
        assert float(row["p@1_std"]) == pytest.approx(np.std(vals, ddof=1))
    timings = list(csv.DictReader(io.StringIO(res.timings_csv())))
    assert len(timings) == 4 and all(float(t["train_seconds"]) >= 0 for t in timings)
    assert res.report().splitlines()[0].split()[0] == "m"


def test_sweep_is_value_exact(small_sweep):
    plan, tr, te, res = small_sweep
    again = run_sweep(plan, tr, te)
    assert again.runs_csv() == res.runs_csv()
    assert again.summary_csv() == res.summary_csv()


def test_sweep_without_test_set_resplits_per_repeat():
    tr, _ = sharded_dataset(n_clusters=2, n_train=200, n_test=1, seed=4)
    res = run_sweep(SweepPlan("k", (3,), Hyper(m=5), repeats=2, seed=1, train_fraction=0.8), tr)
    assert [r["n_train"] for r in res.runs] == [160, 160]
    assert res.runs[0]["seed"] != res.runs[1]["seed"]
    a, b = (split_dataset(tr, 0.8, derive_seed(1, "split", r))[1] for r in range(2))
    assert a != b


def test_k_sweep_on_identity_data():
    # Eight points, each label block shared by groups of four identical label sets.
    Y = np.zeros((8, 2))
    Y[:4, 0] = 1.0
    Y[4:, 1] = 1.0
    X = np.repeat(np.eye(2), 4, axis=0) + 0.01 * np.arange(8)[:, None]
    data = Dataset.from_matrices(X, Y)
    plan = SweepPlan("k", (1, 2, 4), Hyper(m=2, ensemble="identity", learners=1, lam=1e-3), seed=0)
    res = run_sweep(plan, data, data)
    assert [r["p@1"] for r in res.runs] == [1.0, 1.0, 1.0]


def test_cluster_sweep_trend():
    tr, te = sharded_dataset(seed=5)
    res = run_sweep(SweepPlan("C", (1, 4, 8), Hyper(m=40), seed=2, Ks=(1,)), tr, te)
    p1 = [r["p@1"] for r in res.runs]
    assert p1[0] <= p1[1] <= p1[2]
    assert p1[2] >= p1[0] + 0.05


def test_d_sweep_uses_supplied_datasets():
    def make(d):
        return sharded_dataset(n_clusters=2, n_features=int(d), n_train=100, n_test=30, seed=int(d))

    res = run_sweep(SweepPlan("d", (5, 9), Hyper(m=4)), datasets=make)
    assert [r["d"] for r in res.runs] == [5, 9]
    with pytest.raises(ConfigError):
        run_sweep(SweepPlan("d", (5,), Hyper(m=4)))
