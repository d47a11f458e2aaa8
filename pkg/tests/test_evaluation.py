from itertools import combinations, permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adamus.evaluation import (
    ari,
    clustering_accuracy,
    contingency,
    evaluate_clustering,
    f1_scores,
    kmeans,
    linear_probe,
    matched_count,
    nmi,
    random_assignment_accuracy,
    stratified_split,
    summarize,
)


def brute_force_matched(table):
    r, c = table.shape
    if r <= c:
        return max(sum(table[i, p[i]] for i in range(r)) for p in permutations(range(c), r))
    return brute_force_matched(table.T)


def brute_force_ari(pred, truth):
    pairs = list(combinations(range(len(pred)), 2))
    a = sum(1 for i, j in pairs if pred[i] == pred[j] and truth[i] == truth[j])
    same_p = sum(1 for i, j in pairs if pred[i] == pred[j])
    same_t = sum(1 for i, j in pairs if truth[i] == truth[j])
    expected = same_p * same_t / len(pairs)
    return (a - expected) / (0.5 * (same_p + same_t) - expected)


# k-means ---------------------------------------------------------------------


def test_kmeans_separated_pairs():
    x = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.1, 10.0]])
    a = kmeans(x, 2, seed=0)
    assert a[0] == a[1] and a[2] == a[3] and a[0] != a[2]


def test_kmeans_k_equals_n():
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert len(set(kmeans(x, 5).tolist())) == 5


def test_kmeans_deterministic_and_run_streams():
    x = np.random.default_rng(0).normal(size=(60, 3))
    assert np.array_equal(kmeans(x, 4, seed=3), kmeans(x, 4, seed=3))


def test_kmeans_rejects_bad_input():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError, match="NaN"):
        kmeans(np.array([[np.nan, 0.0], [1.0, 1.0]]), 1)


# partition metrics -------------------------------------------------------------


def test_accuracy_examples():
    assert clustering_accuracy([1, 1, 0, 0], [0, 0, 1, 1]) == 1.0
    assert clustering_accuracy([0, 1, 0, 1], [0, 0, 1, 1]) == 0.5
    assert clustering_accuracy([2, 0, 1], [2, 0, 1]) == 1.0


def test_nmi_examples():
    assert nmi([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert nmi([0, 0, 0, 0], [0, 0, 1, 1]) == 0.0
    assert nmi([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(0.0, abs=1e-12)


def test_ari_examples():
    assert ari([0, 0, 1, 1], [0, 0, 1, 1]) == pytest.approx(1.0)
    assert ari([0, 0, 0, 0], [0, 0, 1, 1]) == pytest.approx(0.0)
    assert ari([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(brute_force_ari([0, 1, 0, 1], [0, 0, 1, 1]))
    assert ari([0, 1, 0, 1], [0, 0, 1, 1]) == pytest.approx(-0.5)


labelings = st.lists(st.integers(0, 4), min_size=2, max_size=30)


@settings(max_examples=80, deadline=None)
@given(labelings, st.data())
def test_metrics_relabel_invariant_and_in_range(truth, data):
    pred = data.draw(st.lists(st.integers(0, 4), min_size=len(truth), max_size=len(truth)))
    relabel = data.draw(st.permutations(range(5)))
    renamed = [relabel[p] for p in pred]
    assert clustering_accuracy(renamed, truth) == pytest.approx(clustering_accuracy(pred, truth))
    assert nmi(renamed, truth) == pytest.approx(nmi(pred, truth))
    assert ari(renamed, truth) == pytest.approx(ari(pred, truth))
    assert 0.0 <= clustering_accuracy(pred, truth) <= 1.0
    assert 0.0 <= nmi(pred, truth) <= 1.0
    assert -0.5 - 1e-9 <= ari(pred, truth) <= 1.0 + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**32 - 1))
def test_ari_matches_pair_counting(n, seed):
    rng = np.random.default_rng(seed)
    pred, truth = rng.integers(0, 3, n).tolist(), rng.integers(0, 3, n).tolist()
    if len(set(pred)) == 1 and len(set(truth)) == 1:
        return
    exp = brute_force_ari(pred, truth) if (
        0.5 * (sum(a == b for a, b in combinations(pred, 2)) + sum(a == b for a, b in combinations(truth, 2)))
        != sum(a == b for a, b in combinations(pred, 2)) * sum(a == b for a, b in combinations(truth, 2))
        / (n * (n - 1) / 2)) else None
    if exp is not None:
        assert ari(pred, truth) == pytest.approx(exp, abs=1e-12)


def test_random_permutation_ari_near_zero():
    truth = np.repeat([0, 1], 50)
    rng = np.random.default_rng(0)
    assert abs(np.mean([ari(rng.permutation(truth), truth) for _ in range(100)])) < 0.1


@pytest.mark.parametrize("seed", range(5))
def test_hungarian_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    for _ in range(40):
        r, c = rng.integers(1, 7, size=2)
        table = rng.integers(0, 20, size=(r, c))
        assert matched_count(table) == brute_force_matched(table)


def test_contingency_counts():
    assert contingency([0, 0, 1], [5, 7, 7]).tolist() == [[1, 1], [0, 1]]


def test_evaluate_clustering_perfect():
    x = np.repeat(np.eye(3) * 10, 5, axis=0)
    res = evaluate_clustering(x, np.repeat([0, 1, 2], 5), 3)
    assert (res.acc, res.nmi, res.ari) == pytest.approx((1.0, 1.0, 1.0))
    assert len(set(res.assignments.tolist())) <= 3


def test_random_assignment_baseline():
    truth = np.repeat(np.arange(10), 60)
    assert 0.1 < random_assignment_accuracy(truth, 10) < 0.2


# classification ----------------------------------------------------------------


def test_stratified_split():
    y = np.repeat([0, 1, 2], [10, 20, 30])
    tr, te = stratified_split(y, 0.2, seed=0)
    assert np.bincount(y[te]).tolist() == [2, 4, 6]
    assert set(tr) | set(te) == set(range(60)) and not set(tr) & set(te)
    assert not np.array_equal(stratified_split(y, 0.2, 0, run=1)[1], te)


def test_probe_separable():
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 50)
    z = rng.normal(size=(100, 2)) + np.where(y[:, None] == 1, 6.0, -6.0)
    r = linear_probe(z[::2], y[::2], z[1::2], y[1::2])
    assert r.acc == 1.0 and r.macro_f1 == 1.0


def test_probe_constant_embeddings_majority():
    y = np.array([0] * 30 + [1] * 10)
    z = np.zeros((40, 3))
    r = linear_probe(z, y, z, y)
    assert r.acc == pytest.approx(0.75)
    assert r.macro_f1 == pytest.approx(r.per_class_f1.mean())


def test_probe_class_missing_from_train():
    with pytest.raises(ValueError, match="absent"):
        linear_probe(np.zeros((2, 1)), [0, 0], np.zeros((1, 1)), [1])


def test_f1_zero_division():
    assert f1_scores(np.array([0, 0]), np.array([0, 0]), [0, 1]).tolist() == [1.0, 0.0]


def test_summarize():
    assert summarize([1.0, 3.0]) == {"mean": 2.0, "std": 1.0}
