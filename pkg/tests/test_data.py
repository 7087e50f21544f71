from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ifpca.data import (DataError, DataMatrix, EmptyMatrixError, LabelVector, ParseError,
                        load_labels, load_matrix, normalize_columns, write_matrix)


def test_sample_mode_symmetric_triple():
    W = normalize_columns(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(W.values[:, 0], [-1, 0, 1], atol=1e-15)


def test_population_mode_uses_n():
    W = normalize_columns(np.array([[1.0], [2.0], [3.0]]), sd_mode="population")
    np.testing.assert_allclose(W.values[:, 0], np.array([-1, 0, 1]) / np.sqrt(2 / 3))


def test_constant_column_dropped_not_raised(caplog):
    X = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]])
    with caplog.at_level(logging.WARNING):
        W = normalize_columns(X)
    assert W.dropped_features == (0,)
    assert list(W.retained_features) == [1]
    assert W.feature_ids == ("f1",)
    assert "zero-variance" in caplog.text


def test_all_constant_raises():
    with pytest.raises(EmptyMatrixError):
        normalize_columns(np.ones((4, 3)))


def test_moments_after_normalization(rng):
    X = rng.standard_normal((50, 20)) * 7 + 3
    W = normalize_columns(X).values
    assert np.abs(W.mean(axis=0)).max() < 1e-10
    assert np.abs(W.std(axis=0, ddof=1) - 1).max() < 1e-10


def test_dropped_and_retained_partition(rng):
    X = rng.standard_normal((10, 8))
    X[:, [2, 5]] = 1.5
    W = normalize_columns(X)
    kept = set(W.retained_features.tolist())
    assert kept.isdisjoint(W.dropped_features)
    assert kept | set(W.dropped_features) == set(range(8))


def test_outputs_are_read_only(rng):
    W = normalize_columns(rng.standard_normal((5, 3)))
    with pytest.raises(ValueError):
        W.values[0, 0] = 1.0


def test_non_finite_rejected():
    with pytest.raises(DataError):
        DataMatrix(np.array([[1.0, np.nan], [2.0, 3.0]]))
    with pytest.raises(DataError):
        DataMatrix(np.ones((1, 3)))


matrices = arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(1, 6)),
                  elements=st.floats(-1e3, 1e3, allow_nan=False, width=64))


def _nondegenerate(X):
    # keep columns whose spread is well above rounding noise
    return np.ptp(X, axis=0) > 1e-3 * (1 + np.abs(X).max(axis=0))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_normalization_idempotent(X):
    ok = _nondegenerate(X)
    if not ok.any():
        return
    X = X[:, ok]
    W1 = normalize_columns(X).values
    W2 = normalize_columns(W1).values
    assert np.abs(W1 - W2).max() < 1e-10


@settings(max_examples=60, deadline=None)
@given(matrices, st.floats(-100, 100), st.floats(0.01, 100))
def test_normalization_affine_invariant(X, shift, scale):
    ok = _nondegenerate(X)
    if not ok.any():
        return
    X = X[:, ok]
    W1 = normalize_columns(X).values
    W2 = normalize_columns(X * scale + shift).values
    assert np.abs(W1 - W2).max() < 1e-8


def test_load_csv(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("1,2\n3,4\n5,6\n")
    X = load_matrix(f)
    assert X.values.shape == (3, 2)
    np.testing.assert_array_equal(X.values, [[1, 2], [3, 4], [5, 6]])
    Xt = load_matrix(f, transpose=True)
    np.testing.assert_array_equal(Xt.values, X.values.T)


def test_load_tsv_with_header(tmp_path):
    f = tmp_path / "m.tsv"
    f.write_text("a\tb\n1\t2\n3\t4\n")
    X = load_matrix(f, has_header=True)
    assert X.feature_ids == ("a", "b")
    Xt = load_matrix(f, has_header=True, transpose=True)
    assert Xt.subject_ids == ("a", "b")


def test_parse_error_location(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\nabc,4\n5,6\n")
    with pytest.raises(ParseError) as e:
        load_matrix(f)
    assert (e.value.row, e.value.col) == (2, 1)


def test_ragged_row(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\n3\n")
    with pytest.raises(ParseError) as e:
        load_matrix(f)
    assert e.value.row == 2


def test_empty_file(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("")
    with pytest.raises(ParseError):
        load_matrix(f)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 5)),
              elements=st.floats(-1e12, 1e12, allow_nan=False, width=64)))
def test_write_load_roundtrip(tmp_path_factory, X):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    write_matrix(DataMatrix(X), path, header=True)
    Y = load_matrix(path, has_header=True)
    np.testing.assert_array_equal(Y.values, X)
    assert Y.feature_ids == DataMatrix(X).feature_ids


def test_labels(tmp_path):
    f = tmp_path / "y.txt"
    f.write_text("1\n2\n\n2\n")
    np.testing.assert_array_equal(load_labels(f), [1, 2, 2])
    f.write_text("1\nx\n")
    with pytest.raises(ParseError):
        load_labels(f)


def test_label_vector():
    lv = LabelVector.from_codes(["b", "a", "b"])
    np.testing.assert_array_equal(lv.labels, [2, 1, 2])
    assert lv.K == 2
    with pytest.raises(DataError):
        LabelVector(np.array([0, 1]))
