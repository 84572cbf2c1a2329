import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bahcfilter.errors import DataError, NonpositiveDiagonal, ZeroVariance
from bahcfilter.matrices import (
    ReturnsMatrix,
    eigendecompose,
    frobenius_corr,
    frobenius_cov,
    min_eigenvalue,
    psd_tolerance,
    renormalize_correlation,
    sample_correlation,
    sample_covariance,
)

from oracles import naive_correlation, naive_covariance


def test_returns_matrix_invariants():
    with pytest.raises(DataError):
        ReturnsMatrix(np.zeros((1, 5)))
    with pytest.raises(DataError):
        ReturnsMatrix(np.zeros((3, 1)))
    with pytest.raises(DataError):
        ReturnsMatrix(np.array([[1.0, np.nan], [1.0, 2.0]]))
    r = ReturnsMatrix(np.ones((2, 3)), ["a", "b"])
    assert r.labels == ("a", "b") and r.n == 2 and r.t == 3
    with pytest.raises(ValueError):
        r.data[0, 0] = 5.0


def test_sample_covariance_identical_rows():
    s = sample_covariance([[1, -1], [1, -1]])
    np.testing.assert_array_equal(s, np.ones((2, 2)))


def test_sample_covariance_sign_flip():
    s = sample_covariance([[1, -1], [-1, 1]])
    assert s[0, 1] == -1.0 and s[1, 0] == -1.0


def test_sample_covariance_matches_loop_oracle():
    x = np.random.default_rng(1).standard_normal((4, 50))
    np.testing.assert_allclose(sample_covariance(x), naive_covariance(x), rtol=0, atol=1e-12)


def test_divisor_is_t_not_t_minus_one():
    x = np.random.default_rng(2).standard_normal((3, 7))
    np.testing.assert_allclose(sample_covariance(x), np.cov(x) * 6 / 7, atol=1e-14)


def test_sample_correlation_perfect_pair():
    c = sample_correlation([[1.0, 2.0, 4.0], [2.0, 4.0, 8.0]])
    assert c[0, 1] == pytest.approx(1.0, abs=1e-15)
    assert c[0, 0] == 1.0 and c[1, 1] == 1.0


def test_sample_correlation_constant_row():
    with pytest.raises(ZeroVariance) as info:
        sample_correlation([[1.0, 2.0, 3.0], [0.1, 0.1, 0.1], [3.0, 1.0, 2.0]])
    assert info.value.row == 1


def test_sample_correlation_matches_oracle():
    x = np.random.default_rng(3).standard_normal((5, 40))
    np.testing.assert_allclose(sample_correlation(x), naive_correlation(x), atol=1e-12)


def test_renormalize_identity_case():
    c = sample_correlation(np.random.default_rng(4).standard_normal((4, 20)))
    np.testing.assert_allclose(renormalize_correlation(c), c, atol=1e-15)


def test_renormalize_hand_case():
    out = renormalize_correlation([[4.0, 3.0], [3.0, 9.0]])
    assert out[0, 1] == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_array_equal(np.diag(out), [1.0, 1.0])


def test_renormalize_rejects_nonpositive_diagonal():
    with pytest.raises(NonpositiveDiagonal) as info:
        renormalize_correlation([[1.0, 0.0], [0.0, 0.0]])
    assert info.value.index == 1


def test_eigendecompose_identity_and_closed_form():
    assert np.allclose(eigendecompose(np.eye(4)).eigenvalues, 1.0)
    rho = 0.3
    e = eigendecompose([[1.0, rho], [rho, 1.0]])
    np.testing.assert_allclose(e.eigenvalues, [1 + rho, 1 - rho], atol=1e-15)


def test_eigendecompose_contract():
    a = np.random.default_rng(5).standard_normal((6, 6))
    m = a + a.T
    e = eigendecompose(m)
    u = e.eigenvectors
    assert np.all(np.diff(e.eigenvalues) <= 0)
    assert np.max(np.abs(u @ u.T - np.eye(6))) < 1e-8
    assert np.linalg.norm(e.reconstruct() - m) / np.linalg.norm(m) < 1e-8
    idx = np.argmax(np.abs(u), axis=0)
    assert np.all(u[idx, np.arange(6)] > 0)
    again = eigendecompose(m.copy())
    assert again.eigenvalues.tobytes() == e.eigenvalues.tobytes()
    assert again.eigenvectors.tobytes() == e.eigenvectors.tobytes()


@pytest.mark.parametrize("n", [1, 2, 7, 50])
def test_frobenius_cov_ones(n):
    assert frobenius_cov(np.ones((n, n))) == pytest.approx(1.0)
    assert frobenius_cov(np.zeros((n, n))) == 0.0


def test_frobenius_cov_loop_oracle():
    x = np.random.default_rng(6).standard_normal((5, 5))
    expected = np.sqrt(sum(x[i, j] ** 2 / 25 for i in range(5) for j in range(5)))
    assert frobenius_cov(x) == pytest.approx(expected, rel=1e-14)


def test_frobenius_corr_cases():
    assert frobenius_corr(np.diag([1.0, 5.0, 3.0])) == 0.0
    c = np.full((6, 6), -0.4)
    np.fill_diagonal(c, 9.0)
    assert frobenius_corr(c) == pytest.approx(0.4)
    x = np.random.default_rng(7).standard_normal((5, 5))
    expected = np.sqrt(sum(2 * x[i, j] ** 2 / 20 for i in range(5) for j in range(i)))
    assert frobenius_corr(x) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 12), t=st.integers(2, 40), seed=st.integers(0, 2**32 - 1))
def test_covariance_psd_and_corr_consistency(n, t, seed):
    x = np.random.default_rng(seed).standard_normal((n, t))
    s = sample_covariance(x)
    assert np.array_equal(s, s.T)
    assert min_eigenvalue(s) >= -psd_tolerance(s)
    np.testing.assert_allclose(sample_correlation(x), renormalize_correlation(s), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), shift=st.floats(-5, 5))
def test_frobenius_corr_ignores_common_diagonal_change(seed, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, 5, 5))
    d = np.diag(rng.standard_normal(5) * shift)
    assert frobenius_corr((a + d) - (b + d)) == pytest.approx(frobenius_corr(a - b), rel=1e-12)
