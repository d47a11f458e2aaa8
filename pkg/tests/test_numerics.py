import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from adamus.numerics import (
    DegenerateInputError,
    Spectrum,
    covariance,
    dirac,
    jacobi_eigenvalues,
    pearson_matrix,
    symmetric_eigenvalues,
    uniform,
    wasserstein_1d,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def random_distribution(rng, d):
    p = rng.random(d)
    return p / p.sum()


# covariance ------------------------------------------------------------------


def test_covariance_identical_rows_is_zero():
    assert np.array_equal(covariance([[1.0, 2.0], [1.0, 2.0]]), np.zeros((2, 2)))


def test_covariance_hand_value():
    np.testing.assert_allclose(covariance([[0.0, 0.0], [2.0, 2.0]]), [[2.0, 2.0], [2.0, 2.0]])


def test_covariance_matches_numpy():
    x = np.random.default_rng(0).normal(size=(30, 5))
    np.testing.assert_allclose(covariance(x), np.cov(x, rowvar=False), atol=1e-12)


def test_covariance_permutation_equivariant():
    x = np.random.default_rng(1).normal(size=(20, 4))
    perm = [2, 0, 3, 1]
    np.testing.assert_allclose(covariance(x[:, perm]), covariance(x)[np.ix_(perm, perm)], atol=1e-12)


def test_covariance_needs_two_rows():
    with pytest.raises(DegenerateInputError):
        covariance([[1.0, 2.0]])


# eigenvalues -----------------------------------------------------------------


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
@pytest.mark.parametrize("m, expected", [
    (np.eye(3), [1, 1, 1]),
    (np.diag([4.0, 1.0]), [4, 1]),
    (np.diag([1.0, 4.0]), [4, 1]),
    ([[2.0, 1.0], [1.0, 2.0]], [3, 1]),
])
def test_eigenvalue_examples(method, m, expected):
    np.testing.assert_allclose(symmetric_eigenvalues(m, method).eigenvalues, expected, atol=1e-10)


def test_eigenvalues_clamped_and_sorted():
    spec = symmetric_eigenvalues([[0.0, 1.0], [1.0, 0.0]])  # eigenvalues +-1
    assert list(spec.eigenvalues) == pytest.approx([1.0, 0.0])


def test_asymmetric_input_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        symmetric_eigenvalues([[1.0, 2.0], [0.0, 1.0]])


def test_jacobi_agrees_with_lapack():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(20, 20))
    a = a + a.T
    np.testing.assert_allclose(np.sort(jacobi_eigenvalues(a)), np.linalg.eigvalsh(a), atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2**32 - 1))
def test_eigenvalue_sum_equals_trace_for_psd(d, seed):
    a = np.random.default_rng(seed).normal(size=(d + 3, d))
    m = a.T @ a
    spec = symmetric_eigenvalues(m, "jacobi")
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    assert spec.eigenvalues.sum() == pytest.approx(np.trace(m), rel=1e-6)


def test_normalized_spectrum_sums_to_one():
    spec = Spectrum(np.array([3.0, 1.0])).normalize()
    assert spec.normalized and spec.eigenvalues.sum() == pytest.approx(1.0)
    assert list(spec.eigenvalues) == [0.75, 0.25]


def test_all_zero_spectrum_normalizes_to_uniform():
    assert list(Spectrum(np.zeros(4)).normalize().eigenvalues) == [0.25] * 4


# pearson ---------------------------------------------------------------------


def test_pearson_self_and_negation():
    x = np.array([[1.0, -1.0], [2.0, -2.0], [4.0, -4.0]])
    r = pearson_matrix(x)
    assert r[0, 0] == 1.0 and r[0, 1] == pytest.approx(-1.0)


def test_pearson_independent_patterns():
    x = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert pearson_matrix(x)[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_pearson_constant_column():
    x = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    r = pearson_matrix(x)
    assert r[0, 1] == 0.0 and r[1, 0] == 0.0 and r[1, 1] == 1.0


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 6)), elements=finite))
def test_pearson_symmetric_bounded_unit_diagonal(x):
    r = pearson_matrix(x)
    assert np.array_equal(r, r.T)
    assert np.all(np.abs(r) <= 1.0)
    assert np.all(np.diag(r) == 1.0)


# wasserstein -----------------------------------------------------------------


def test_wasserstein_identical_is_zero():
    p = np.array([0.2, 0.3, 0.5])
    assert wasserstein_1d(p, p) == 0.0


def test_wasserstein_dirac_vs_uniform_small():
    assert wasserstein_1d(dirac(2), uniform(2)) == pytest.approx(0.5)
    assert wasserstein_1d(dirac(5), uniform(5)) == pytest.approx(2.0)


def test_wasserstein_length_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        wasserstein_1d(uniform(2), uniform(3))


def test_wasserstein_rejects_unnormalized():
    with pytest.raises(ValueError):
        wasserstein_1d([0.5, 0.6], uniform(2))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 32), st.integers(0, 2**32 - 1))
def test_wasserstein_metric_properties(d, seed):
    rng = np.random.default_rng(seed)
    p, q, r = (random_distribution(rng, d) for _ in range(3))
    assert wasserstein_1d(p, q) >= 0
    assert wasserstein_1d(p, q) == pytest.approx(wasserstein_1d(q, p), abs=1e-12)
    assert wasserstein_1d(p, r) <= wasserstein_1d(p, q) + wasserstein_1d(q, r) + 1e-12


@pytest.mark.parametrize("d", [2, 3, 7, 64, 511, 512])
def test_wasserstein_dirac_closed_form(d):
    assert wasserstein_1d(dirac(d), uniform(d)) == pytest.approx((d - 1) / 2, rel=1e-12)
