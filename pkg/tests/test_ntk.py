import math

import numpy as np
import pytest

from effrank.errors import BudgetError, DimError, DomainError
from effrank.linalg_core import effective_rank_exact, sym_eigenvalues
from effrank.ntk import (
    MLPJacobians, MLPSpec, mlp_forward, mlp_init, mlp_jacobian, mlp_vjp, ntk_finite,
    ntk_infinite_relu,
)


def flat_params(params):
    return np.concatenate([W.ravel() for W in params.weights])


def with_flat(params, theta):
    out, k = [], 0
    for W in params.weights:
        out.append(theta[k:k + W.size].reshape(W.shape))
        k += W.size
    return type(params)(params.spec, tuple(out), params.seed)


class TestInit:
    def test_parameter_count(self):
        assert MLPSpec(3, 4, 1, 2).p == 20

    def test_reproducible(self):
        a = mlp_init(MLPSpec(3, 8, 2, 2), 5)
        b = mlp_init(MLPSpec(3, 8, 2, 2), 5)
        assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))

    def test_first_layer_moments(self):
        W = mlp_init(MLPSpec(4, 4096, 1, 1), 0).weights[0]
        assert abs(W.mean()) < 4 / math.sqrt(W.size)
        assert W.var() == pytest.approx(1.0, abs=0.05)

    def test_bad_spec(self):
        with pytest.raises(DimError):
            MLPSpec(0, 4)


class TestJacobian:
    def test_matches_finite_differences(self):
        params = mlp_init(MLPSpec(3, 8, 2, 2), 1)
        x = np.array([0.3, -1.2, 0.8])
        J = mlp_jacobian(params, x)
        theta = flat_params(params)
        h = 1e-5
        fd = np.empty_like(J)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = h
            up = mlp_forward(with_flat(params, theta + e), x)[0]
            dn = mlp_forward(with_flat(params, theta - e), x)[0]
            fd[:, k] = (up - dn) / (2 * h)
        assert np.max(np.abs(J - fd)) <= 1e-4 * np.max(np.abs(J))

    def test_zero_input(self):
        params = mlp_init(MLPSpec(3, 8, 2, 2), 1)
        assert np.all(mlp_jacobian(params, np.zeros(3)) == 0.0)

    def test_readout_block(self):
        params = mlp_init(MLPSpec(2, 6, 1, 2), 3)
        x = np.array([0.5, -0.7])
        J = mlp_jacobian(params, x)
        a = np.maximum(params.weights[0] @ x / math.sqrt(2), 0.0)
        readout = J[:, -12:].reshape(2, 2, 6)
        np.testing.assert_allclose(readout[0, 0], a / math.sqrt(6), rtol=1e-14)
        np.testing.assert_allclose(readout[0, 1], 0.0)

    def test_vjp_is_linear_in_cotangent(self, rng):
        params = mlp_init(MLPSpec(3, 8, 2, 3), 2)
        x = rng.standard_normal(3)
        g = rng.standard_normal((4, 3))
        np.testing.assert_allclose(mlp_vjp(params, x, g), g @ mlp_jacobian(params, x), atol=1e-13)

    def test_forward_shape(self):
        params = mlp_init(MLPSpec(3, 8, 2, 3), 2)
        assert mlp_forward(params, np.zeros((5, 3))).shape == (5, 3)


class TestFiniteNTK:
    def test_matches_explicit_gram(self, rng):
        params = mlp_init(MLPSpec(3, 12, 2, 2), 4)
        X = rng.standard_normal((9, 3))
        K = ntk_finite(params, X).entries
        Js = [mlp_jacobian(params, x) for x in X]
        direct = np.array([[np.sum(a * b) for b in Js] for a in Js])
        np.testing.assert_allclose(K, direct, rtol=1e-10, atol=1e-12)

    def test_single_point_positive(self):
        params = mlp_init(MLPSpec(3, 8, 1, 1), 0)
        K = ntk_finite(params, np.array([[1.0, 2.0, -0.5]])).entries
        assert K.shape == (1, 1) and K[0, 0] > 0

    def test_psd(self, rng):
        params = mlp_init(MLPSpec(4, 32, 2, 2), 6)
        K = ntk_finite(params, rng.standard_normal((40, 4))).entries
        lam = sym_eigenvalues(K)
        assert lam[-1] >= -1e-8 * lam[0]

    def test_permutation_equivariant(self, rng):
        params = mlp_init(MLPSpec(3, 16, 2, 1), 7)
        X = rng.standard_normal((10, 3))
        perm = rng.permutation(10)
        K = ntk_finite(params, X).entries
        np.testing.assert_allclose(ntk_finite(params, X[perm]).entries, K[np.ix_(perm, perm)], rtol=1e-12)

    def test_input_homogeneity(self, rng):
        # bias-free ReLU nets are 1-homogeneous in x, so K scales by s^2
        params = mlp_init(MLPSpec(3, 16, 2, 2), 8)
        X = rng.standard_normal((6, 3))
        K = ntk_finite(params, X).entries
        np.testing.assert_allclose(ntk_finite(params, 2.5 * X).entries, 6.25 * K, rtol=1e-12)
        assert effective_rank_exact(ntk_finite(params, 2.5 * X)) == pytest.approx(effective_rank_exact(K))

    def test_budget(self):
        params = mlp_init(MLPSpec(2, 4, 1, 1), 0)
        with pytest.raises(BudgetError):
            ntk_finite(params, np.ones((513, 2)))

    def test_approaches_limit_at_root_width_rate(self):
        X = np.array([[1.0, 0.0, 0.0], [0.6, 0.8, 0.0]]) * math.sqrt(3)
        spec = MLPSpec(3, 1, 1, 1)
        K_inf = ntk_infinite_relu(spec, X).entries
        widths = [64, 256, 1024, 4096]
        dev = []
        for m in widths:
            errs = [np.max(np.abs(ntk_finite(mlp_init(MLPSpec(3, m, 1, 1), s), X).entries - K_inf))
                    for s in range(60)]
            dev.append(np.median(errs))
        slope = np.polyfit(np.log(widths), np.log(dev), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.2)


class TestInfiniteNTK:
    def test_one_hidden_layer_by_hand(self):
        # e1, e2 in d=2: q = diag(1/2); off-diagonal angle pi/2
        K = ntk_infinite_relu(MLPSpec(2, 1, 1, 1), np.eye(2)).entries
        np.testing.assert_allclose(K, [[0.5, 1 / (4 * math.pi)], [1 / (4 * math.pi), 0.5]], rtol=1e-14)

    def test_diagonal_equals_scaled_norm(self, rng):
        X = rng.standard_normal((5, 4))
        K = ntk_infinite_relu(MLPSpec(4, 1, 1, 3), X).entries
        np.testing.assert_allclose(np.diag(K), 3 * np.sum(X * X, 1) / 4, rtol=1e-14)

    def test_two_layer_diagonal(self):
        # q halves per layer and Theta_3 = q/4 + Theta_2/2 = 3q/4
        K = ntk_infinite_relu(MLPSpec(2, 1, 2, 1), np.array([[1.0, 1.0]])).entries
        assert K[0, 0] == pytest.approx(0.75)

    def test_zero_input(self):
        with pytest.raises(DomainError):
            ntk_infinite_relu(MLPSpec(2, 1), np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_psd(self, rng):
        K = ntk_infinite_relu(MLPSpec(5, 1, 3, 1), rng.standard_normal((64, 5))).entries
        lam = sym_eigenvalues(K)
        assert lam[-1] >= -1e-10 * lam[0]

    def test_orthogonal_inputs_match_monte_carlo(self):
        X = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]) * 2.0
        spec = MLPSpec(4, 8192, 1, 1)
        K_inf = ntk_infinite_relu(spec, X).entries
        draws = np.array([ntk_finite(mlp_init(spec, s), X).entries for s in range(122)])
        mean = draws.mean(0)
        se = draws.std(0, ddof=1) / math.sqrt(len(draws))
        assert np.all(np.abs(mean - K_inf) <= 3 * se + 1e-12)

    def test_deep_multi_output_matches_monte_carlo(self, rng):
        X = rng.standard_normal((3, 3))
        spec = MLPSpec(3, 2048, 2, 2)
        K_inf = ntk_infinite_relu(spec, X).entries
        draws = np.array([ntk_finite(mlp_init(spec, s), X).entries for s in range(60)])
        z = (draws.mean(0) - K_inf) / (draws.std(0, ddof=1) / math.sqrt(60))
        # 6 distinct entries; 3.5 sigma keeps the family-wise false alarm rate small
        assert np.max(np.abs(np.triu(z))) < 3.5


class TestProvider:
    def test_stacked_jacobians(self, rng):
        params = mlp_init(MLPSpec(3, 8, 1, 2), 0)
        X = rng.standard_normal((4, 3))
        J = MLPJacobians(params).jacobians(X)
        assert J.shape == (4, 2, params.spec.p)
        np.testing.assert_array_equal(J[2], mlp_jacobian(params, X[2]))
