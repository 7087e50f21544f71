from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ifpca.metrics as metrics
from ifpca.metrics import (ari, clustering_error, format_footer_csv, read_error_table,
                           regret_and_rank)
from helpers import brute_error
from ifpca.rareweak import hamming_error

TABLE = Path(__file__).parent / "data" / "table3_errors.csv"


def pair_ari(a, b) -> float:
    """ARI by enumerating every pair of subjects."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = [a[i] == a[j] for i, j in pairs]
    same_b = [b[i] == b[j] for i, j in pairs]
    both = sum(x and y for x, y in zip(same_a, same_b))
    na, nb, total = sum(same_a), sum(same_b), len(pairs)
    expected = na * nb / total
    return (both - expected) / ((na + nb) / 2 - expected)


def test_error_examples():
    assert clustering_error([1, 1, 2, 2], [1, 1, 2, 2], 2).error_count == 0
    assert clustering_error([2, 2, 1, 1], [1, 1, 2, 2], 2).error_count == 0
    r = clustering_error([1, 2, 2, 2], [1, 1, 2, 2], 2)
    assert r.error_count == 1 and r.accuracy == 0.75 and r.n == 4


def test_error_report_consistency():
    r = clustering_error([3, 3, 1, 2, 2, 1], [1, 1, 2, 3, 3, 3], 3)
    assert r.error_count == round(r.n * (1 - r.accuracy))
    assert sorted(r.permutation_used.values()) == [1, 2, 3]


def test_error_rejects_out_of_range():
    with pytest.raises(ValueError):
        clustering_error([0, 1], [1, 1], 2)
    with pytest.raises(ValueError):
        clustering_error([1, 3], [1, 1], 2)
    with pytest.raises(ValueError):
        clustering_error([1, 2, 1], [1, 1], 2)


labelings = st.integers(2, 5).flatmap(lambda K: st.tuples(
    st.just(K), st.lists(st.tuples(st.integers(1, K), st.integers(1, K)), min_size=1, max_size=30)))


@settings(max_examples=200, deadline=None)
@given(labelings)
def test_error_matches_enumeration(case):
    K, pairs = case
    yh, y = [p[0] for p in pairs], [p[1] for p in pairs]
    assert clustering_error(yh, y, K).error_count == brute_error(yh, y, K)


@settings(max_examples=200, deadline=None)
@given(labelings, st.randoms(use_true_random=False))
def test_error_invariant_under_common_relabeling(case, rnd):
    K, pairs = case
    perm = list(range(1, K + 1))
    rnd.shuffle(perm)
    yh = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    relabel = np.array([0] + perm)
    assert (clustering_error(relabel[yh], relabel[y], K).error_count
            == clustering_error(yh, y, K).error_count)


def test_matching_path_agrees_with_enumeration(rng, monkeypatch):
    cases = []
    for _ in range(50):
        K = int(rng.integers(2, 7))
        cases.append((K, rng.integers(1, K + 1, 40), rng.integers(1, K + 1, 40)))
    expect = [clustering_error(yh, y, K).error_count for K, yh, y in cases]
    monkeypatch.setattr(metrics, "ENUMERATION_MAX_K", 0)
    assert [clustering_error(yh, y, K).error_count for K, yh, y in cases] == expect


def test_large_K_relabeling_is_free(rng):
    y = rng.integers(1, 13, 300)
    perm = rng.permutation(12) + 1
    assert clustering_error(perm[y - 1], y, 12).error_count == 0


def test_ari_examples():
    assert ari([1, 1, 2, 2], [1, 1, 2, 2]) == 1.0
    assert ari([1, 1, 1, 1], [1, 1, 2, 2]) == 0.0
    a, b = [1, 1, 2, 2, 2, 2], [1, 1, 1, 2, 2, 2]
    assert abs(ari(a, b) - pair_ari(a, b)) < 1e-12


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=3, max_size=25))
def test_ari_matches_pair_enumeration(pairs):
    a, b = [p[0] for p in pairs], [p[1] for p in pairs]
    denom_zero = len(set(a)) in (1, len(a)) and len(set(b)) in (1, len(b))
    if denom_zero:
        return
    oracle = pair_ari(a, b)
    assert abs(ari(a, b) - oracle) < 1e-12
    assert ari(a, b) <= 1 + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=2, max_size=30))
def test_ari_self_is_one(y):
    if len(set(y)) < 2:
        return
    assert ari(y, y) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([-1, 1]), st.sampled_from([-1, 1])),
                min_size=1, max_size=40))
def test_accuracy_equals_one_minus_hamming(pairs):
    yh = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    code = lambda v: np.where(v == 1, 1, 2)  # noqa: E731
    acc = clustering_error(code(yh), code(y), 2).accuracy
    assert abs(acc - (1 - hamming_error(yh, y))) < 1e-12


def test_regret_extremes():
    E = np.array([[1, 5], [3, 5], [7, 9]])
    r = regret_and_rank(E)
    np.testing.assert_allclose(r.per_dataset_regrets[:, 0], [0, 1 / 3, 1])
    np.testing.assert_allclose(r.per_dataset_ranks[:, 1], [1.5, 1.5, 3])


def test_regret_flags_all_tied():
    E = np.array([[1, 4], [2, 4], [3, 4]])
    r = regret_and_rank(E, datasets=["a", "b"])
    assert r.flagged_datasets == ("b",)
    assert np.all(np.isnan(r.per_dataset_regrets[:, 1]))
    np.testing.assert_allclose(r.per_dataset_ranks[:, 1], [2, 2, 2])
    np.testing.assert_allclose(r.regret_mean, [0, 0.5, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(1, 6), st.data())
def test_rank_sums_and_regret_range(M, D, data):
    E = np.array(data.draw(st.lists(st.lists(st.integers(0, 20), min_size=D, max_size=D),
                                     min_size=M, max_size=M)), dtype=float)
    r = regret_and_rank(E)
    np.testing.assert_allclose(r.per_dataset_ranks.sum(axis=0), M * (M + 1) / 2)
    reg = r.per_dataset_regrets[~np.isnan(r.per_dataset_regrets)]
    assert np.all((reg >= 0) & (reg <= 1))


def test_regret_needs_two_methods():
    with pytest.raises(ValueError):
        regret_and_rank(np.array([[1, 2]]))


def test_published_table_footer():
    E, methods, datasets = read_error_table(TABLE)
    r = regret_and_rank(E, methods, datasets)
    assert r.per_dataset_ranks.sum(axis=0).tolist() == [36.0] * 10
    k = methods.index("IF-PCA")
    assert round(r.rank_mean[k], 2) == 2.65
    assert abs(r.regret_mean[k] - 0.18) <= 0.005


def test_footer_csv_layout():
    E, methods, datasets = read_error_table(TABLE)
    text = format_footer_csv(regret_and_rank(E, methods, datasets), digits=2)
    lines = text.splitlines()
    assert lines[0].startswith("statistic,kmeans")
    assert lines[1].split(",")[3] == "2.65"
