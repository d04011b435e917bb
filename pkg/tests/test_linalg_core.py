import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from effrank.errors import InvalidMatrix, ZeroMatrix
from effrank.linalg_core import (
    GramMatrix, effective_rank_exact, effective_rank_from_spectrum, grad_f, is_psd,
    jacobi_eigenvalues, numerical_rank, operator_norm, sym_eigenvalues,
)

from conftest import random_psd


def f_plain(A):
    return np.trace(A) ** 2 / np.sum(A * A)


def charpoly_roots(A, dps=60):
    """Eigenvalues from the characteristic polynomial (Faddeev-LeVerrier in high precision)."""
    with mpmath.workdps(dps):
        n = A.shape[0]
        M = mpmath.matrix(A.tolist())
        coeffs = [mpmath.mpf(1)]
        Mk = mpmath.zeros(n)
        I = mpmath.eye(n)
        for k in range(1, n + 1):
            Mk = M * Mk + coeffs[-1] * I
            AM = M * Mk
            c = -sum(AM[i, i] for i in range(n)) / k
            coeffs.append(c)
        roots = mpmath.polyroots(coeffs, maxsteps=500, extraprec=200)
        return np.sort(np.array([float(mpmath.re(r)) for r in roots]))[::-1]


class TestEigenvalues:
    def test_identity(self):
        np.testing.assert_array_equal(sym_eigenvalues(np.eye(4)), np.ones(4))

    def test_all_ones_rank_one(self):
        np.testing.assert_allclose(sym_eigenvalues(np.ones((3, 3))), [3, 0, 0], atol=1e-14)

    def test_matches_characteristic_polynomial(self, rng):
        A = rng.standard_normal((8, 8))
        A = A + A.T
        np.testing.assert_allclose(sym_eigenvalues(A), charpoly_roots(A), atol=1e-8)

    def test_sum_equals_trace(self, rng):
        A = random_psd(rng, 40)
        lam = sym_eigenvalues(A)
        assert abs(lam.sum() - np.trace(A)) <= 1e-8 * 40 * lam.max()

    @pytest.mark.parametrize("n", [1, 2, 5, 17, 64])
    def test_jacobi_matches_lapack(self, rng, n):
        A = rng.standard_normal((n, n))
        A = A + A.T
        np.testing.assert_allclose(jacobi_eigenvalues(A), np.linalg.eigvalsh(A)[::-1], atol=1e-11)

    def test_sorted_descending(self, rng):
        lam = sym_eigenvalues(random_psd(rng, 12))
        assert np.all(np.diff(lam) <= 0)

    def test_non_finite_rejected(self):
        A = np.eye(3)
        A[0, 0] = np.nan
        with pytest.raises(InvalidMatrix):
            sym_eigenvalues(A)

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidMatrix):
            sym_eigenvalues(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestEffectiveRank:
    def test_identity(self):
        assert effective_rank_exact(np.eye(4)) == 4.0

    def test_rank_one(self):
        assert effective_rank_exact(np.ones((3, 3))) == 1.0

    def test_spiked_diagonal(self):
        # (sum lam)^2 / sum lam^2 = 15^2 / 105
        assert effective_rank_exact(np.diag([10.0, 1, 1, 1, 1, 1])) == pytest.approx(15 / 7, rel=1e-15)

    def test_zero_matrix(self):
        with pytest.raises(ZeroMatrix):
            effective_rank_exact(np.zeros((3, 3)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 64), st.integers(0, 2**32 - 1))
    def test_matches_spectrum(self, n, seed):
        A = random_psd(np.random.default_rng(seed), n)
        assert effective_rank_exact(A) == pytest.approx(
            effective_rank_from_spectrum(sym_eigenvalues(A)), rel=1e-8)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1))
    def test_bounded_by_rank(self, n, r, seed):
        A = random_psd(np.random.default_rng(seed), n, min(r, n))
        reff = effective_rank_exact(A)
        assert 1.0 - 1e-12 <= reff <= numerical_rank(A) + 1e-9 <= n + 1e-9

    @pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
    def test_scale_invariant(self, rng, c):
        A = random_psd(rng, 20)
        assert effective_rank_exact(c * A) == pytest.approx(effective_rank_exact(A), rel=1e-12)

    def test_gram_matrix_accessors(self, rng):
        A = random_psd(rng, 6)
        K = GramMatrix(A, psd=True)
        assert K.n == 6
        assert K.trace == pytest.approx(np.trace(A))
        assert K.frob2 == pytest.approx(np.sum(A * A))
        assert is_psd(K)


class TestGradient:
    def test_identity_is_stationary(self):
        np.testing.assert_allclose(grad_f(np.eye(5)), 0.0, atol=1e-15)

    def test_two_by_two(self):
        np.testing.assert_allclose(grad_f(np.diag([2.0, 1.0])), np.diag([-0.24, 0.48]), atol=1e-14)

    def test_two_by_two_finite_differences(self):
        A = np.diag([2.0, 1.0])
        h = 1e-6
        for i, expected in [(0, -0.24), (1, 0.48)]:
            E = np.zeros((2, 2))
            E[i, i] = h
            fd = (f_plain(A + E) - f_plain(A - E)) / (2 * h)
            assert fd == pytest.approx(expected, abs=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 16), st.integers(0, 2**32 - 1))
    def test_euler_identity(self, n, seed):
        A = random_psd(np.random.default_rng(seed), n)
        assert abs(np.sum(grad_f(A) * A)) <= 1e-10 * max(1.0, abs(f_plain(A)))

    def test_matches_central_differences(self, rng):
        A = random_psd(rng, 7)
        G = grad_f(A)
        h = 1e-6 * np.sqrt(np.sum(A * A))
        fd = np.empty_like(A)
        for i in range(7):
            for j in range(7):
                E = np.zeros_like(A)
                E[i, j] = h
                fd[i, j] = (f_plain(A + E) - f_plain(A - E)) / (2 * h)
        assert np.max(np.abs(fd - G)) / np.max(np.abs(G)) < 1e-6

    def test_second_order_remainder(self, rng):
        A = random_psd(rng, 10)
        D = rng.standard_normal((10, 10))
        D = D + D.T
        F2 = np.sum(A * A)
        ratios = []
        for t in [1e-1, 1e-2, 1e-3]:
            Delta = t * np.sqrt(F2) * D / np.linalg.norm(D)
            rem = abs(f_plain(A + Delta) - f_plain(A) - np.sum(grad_f(A) * Delta))
            ratios.append(rem / (np.sum(Delta * Delta) / F2))
        # C(t) settles to the second-order coefficient as t -> 0
        assert ratios[2] == pytest.approx(ratios[1], rel=0.1)
        assert max(ratios) < 10 * ratios[2]


class TestOperatorNorm:
    def test_diagonal(self):
        assert operator_norm(np.diag([3.0, -1.0, 2.0])) == pytest.approx(3.0)

    def test_negative_dominant(self):
        assert operator_norm(np.diag([1.0, -4.0])) == pytest.approx(4.0)

    @pytest.mark.parametrize("n", [1, 4, 9])
    def test_all_ones(self, n):
        assert operator_norm(np.ones((n, n))) == pytest.approx(n, rel=1e-12)

    def test_random_matches_eigen_oracle(self, rng):
        A = rng.standard_normal((16, 16))
        A = A + A.T
        lam = np.linalg.eigvalsh(A)
        assert operator_norm(A) == pytest.approx(np.max(np.abs(lam)), rel=1e-6)
