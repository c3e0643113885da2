import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ripml.errors import DataError, DimensionError, ParseError
from ripml.sparse import (
    Dataset,
    SparseVector,
    dataset_stats,
    load_dataset,
    parse_dataset,
    serialize_dataset,
    sparse_dot,
)


def test_parse_small_example():
    ds = parse_dataset("2 3 2\n0 0:1.5 2:2.0\n0,1 1:1.0\n")
    assert (ds.n_points, ds.n_features, ds.n_labels) == (2, 3, 2)
    assert ds.labels[0].indices.tolist() == [0]
    assert ds.labels[1].indices.tolist() == [0, 1]
    np.testing.assert_array_equal(ds.features[0].to_dense(), [1.5, 0.0, 2.0])
    np.testing.assert_array_equal(ds.features[1].to_dense(), [0.0, 1.0, 0.0])


def test_empty_label_list_is_accepted():
    ds = parse_dataset("1 2 3\n  0:1.0\n")
    assert ds.labels[0].nnz == 0
    assert ds.zero_label_mask.tolist() == [True]
    assert ds.features[0].indices.tolist() == [0]


def test_labels_deduplicated_and_sorted_features_sorted():
    ds = parse_dataset("1 5 4\n3,1,3 4:2 1:1\n")
    assert ds.labels[0].indices.tolist() == [1, 3]
    assert ds.features[0].indices.tolist() == [1, 4]


def test_crlf_and_stream_input():
    ds = parse_dataset(io.StringIO("1 2 2\r\n1 0:3\r\n"))
    assert ds.labels[0].indices.tolist() == [1]
    assert ds.features[0].values.tolist() == [3.0]


def test_load_dataset_file_crlf(tmp_path):
    p = tmp_path / "d.txt"
    p.write_bytes(b"2 2 2\r\n0 0:1\r\n1 1:2\r\n")
    ds = load_dataset(p)
    assert ds.n_points == 2


@pytest.mark.parametrize(
    "text",
    [
        "2 3\n0 0:1\n",  # header
        "x 3 2\n0 0:1\n",  # header
        "1 3 2\n0 3:1\n",  # feature index >= d
        "1 3 2\n2 0:1\n",  # label index >= L
        "1 3 2\n0 0:abc\n",  # non-numeric value
        "1 3 2\n0 0:1 0:2\n",  # duplicate feature
        "2 3 2\n0 0:1\n",  # too few lines
        "1 3 2\n0 0:1\n1 1:1\n",  # too many lines
        "1 3 2\n0:0.5 0:1\n",  # label weight != 1
        "1 3 2\n0 x:1\n",  # non-integer feature index
        "1 3 2\n0 1\n",  # feature token without value
        "1 3 2\n0 0:nan\n",
        "",
    ],
)
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse_dataset(text)


def test_parse_error_reports_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_dataset("2 3 2\n0 0:1\n0 9:1\n")


def test_unit_label_weight_is_accepted():
    ds = parse_dataset("1 2 2\n1:1 0:2\n")
    assert ds.labels[0].indices.tolist() == [1]


def test_zero_feature_values_are_dropped():
    ds = parse_dataset("1 3 1\n0 0:0 1:2\n")
    assert ds.features[0].indices.tolist() == [1]


def test_sparse_vector_invariants():
    with pytest.raises(DataError):
        SparseVector(3, [1, 0], [1.0, 1.0])
    with pytest.raises(DataError):
        SparseVector(3, [0, 3], [1.0, 1.0])
    with pytest.raises(DataError):
        SparseVector(3, [0], [0.0])
    v = SparseVector.from_pairs(4, [(3, 1.0), (0, 2.0), (1, 0.0)])
    assert v.indices.tolist() == [0, 3]
    with pytest.raises(ValueError):
        v.values[0] = 5.0


def test_sparse_dot_examples():
    a = SparseVector.from_pairs(3, [(0, 1.0), (2, 3.0)])
    b = SparseVector.from_pairs(3, [(2, 2.0)])
    assert sparse_dot(a, b) == 6.0
    assert sparse_dot(a, SparseVector.zeros(3)) == 0.0
    with pytest.raises(DimensionError):
        sparse_dot(a, SparseVector.zeros(4))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sparse_dot_matches_dense_and_is_symmetric(seed):
    g = np.random.default_rng(seed)
    xa = g.standard_normal(10) * (g.random(10) < 0.5)
    xb = g.standard_normal(10) * (g.random(10) < 0.5)
    a, b = SparseVector.from_dense(xa), SparseVector.from_dense(xb)
    dense = float(xa @ xb)
    assert sparse_dot(a, b) == sparse_dot(b, a)
    assert abs(sparse_dot(a, b) - dense) <= 1e-12 * max(1.0, abs(dense))


def test_dataset_stats():
    ds = parse_dataset("2 4 4\n0 0:1\n0,1,2 1:1 2:1 3:1\n")
    nx, ny = dataset_stats(ds)
    assert ny == 2.0
    assert nx == 2.0
    with pytest.raises(DataError):
        dataset_stats(parse_dataset("0 1 1\n"))


@st.composite
def datasets(draw):
    n = draw(st.integers(0, 6))
    d = draw(st.integers(1, 8))
    L = draw(st.integers(1, 6))
    lines = [f"{n} {d} {L}"]
    for _ in range(n):
        labs = draw(st.lists(st.integers(0, L - 1), max_size=4))
        feats = draw(st.dictionaries(st.integers(0, d - 1), st.floats(-1e6, 1e6, allow_nan=False), max_size=d))
        lab_tok = ",".join(map(str, labs))
        feat_tok = " ".join(f"{i}:{v!r}" for i, v in feats.items())
        lines.append(f"{lab_tok} {feat_tok}" if lab_tok else f" {feat_tok}")
    return "\n".join(lines) + "\n"


@settings(max_examples=200, deadline=None)
@given(datasets())
def test_roundtrip_is_canonical(text):
    ds = parse_dataset(text)
    canon = serialize_dataset(ds)
    again = parse_dataset(canon)
    assert again == ds
    assert serialize_dataset(again) == canon
    for y in ds.labels:
        assert np.all(y.values == 1.0)
        assert np.all(np.diff(y.indices) > 0)


def test_serialize_canonical_form():
    ds = parse_dataset("2 3 3\n2,0,2 2:2 0:1.5\n  1:0.25\n")
    assert serialize_dataset(ds) == "2 3 3\n0,2 0:1.5 2:2.0\n 1:0.25\n"


def test_from_matrices_and_subset():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [3.0, 0.0]])
    Y = np.array([[1, 0], [0, 0], [1, 1]])
    ds = Dataset.from_matrices(X, Y)
    assert ds.zero_label_mask.tolist() == [False, True, False]
    np.testing.assert_array_equal(ds.feature_matrix.toarray(), X)
    np.testing.assert_array_equal(ds.label_matrix.toarray(), Y)
    sub = ds.subset([2, 0])
    np.testing.assert_array_equal(sub.feature_matrix.toarray(), X[[2, 0]])


def test_dataset_rejects_non_binary_labels():
    with pytest.raises(DataError):
        Dataset(2, 2, (SparseVector.zeros(2),), (SparseVector(2, [0], [0.5]),))
