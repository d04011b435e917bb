"""Finite-width and infinite-width NTKs of bias-free ReLU MLPs.

The network uses the NTK parameterization: standard-normal weights with the
1/sqrt(fan_in) factor applied outside each layer,

    f(x) = W_{L+1} s_m relu(W_L s_m relu(... relu(W_1 s_d x))),   s_k = k^-1/2.

The finite-width kernel is the trace over the C logits of J(x) J(x')^T.  It is
assembled layer by layer from backpropagated deltas and forward activations
(the Jacobian of layer l is the outer product delta_l a_{l-1}^T), which gives
exactly the same matrix as the explicit Jacobian Gram without storing n x p
numbers.

Infinite-width recursion for this network (plain ReLU, no variance
correction), with q the pre-activation covariance:

    q_1(x, x')     = x.x' / d
    Theta_1        = q_1
    for l = 1..L, with u = q_l(x,x), v = q_l(x',x'), cos t = q_l(x,x') / sqrt(uv):
        q_{l+1}    = sqrt(uv) / (2 pi) * (sin t + (pi - t) cos t)
        qdot_{l+1} = (pi - t) / (2 pi)
        Theta_{l+1} = q_{l+1} + qdot_{l+1} * Theta_l
    K_inf = C * Theta_{L+1}

The readout layer contributes q_{L+1}; every hidden layer's contribution is
carried by the qdot chain.  ``tests/test_ntk.py`` checks it against
Monte-Carlo averages of the finite-width kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetError, DimError, DomainError, NumericalError
from .linalg_core import GramMatrix

MAX_POINTS = 512
# Working set of the layerwise assembly: n * C * width doubles.
MAX_DELTA_ENTRIES = 50_000_000


@dataclass(frozen=True)
class MLPSpec:
    d: int
    m: int
    L: int = 1
    C: int = 1

    def __post_init__(self):
        for name in ("d", "m", "L", "C"):
            if int(getattr(self, name)) < 1:
                raise DimError(f"MLPSpec.{name} must be >= 1")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        shapes = [(self.m, self.d)]
        shapes += [(self.m, self.m)] * (self.L - 1)
        shapes.append((self.C, self.m))
        return shapes

    @property
    def p(self) -> int:
        return sum(a * b for a, b in self.layer_shapes)

    def to_dict(self):
        return {"d": self.d, "m": self.m, "L": self.L, "C": self.C}


@dataclass(frozen=True)
class Params:
    spec: MLPSpec
    weights: tuple
    seed: int

    @property
    def scales(self) -> list[float]:
        return [1.0 / math.sqrt(W.shape[1]) for W in self.weights]


def mlp_init(spec: MLPSpec, seed: int) -> Params:
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    weights = tuple(rng.standard_normal(shape) for shape in spec.layer_shapes)
    return Params(spec, weights, int(seed))


def _forward(params: Params, X: np.ndarray):
    """Pre-activations h_1..h_L and activations a_0..a_L for a batch (n, d)."""
    acts = [X]
    pre = []
    a = X
    for W, s in zip(params.weights[:-1], params.scales[:-1]):
        h = (a @ W.T) * s
        pre.append(h)
        a = np.maximum(h, 0.0)
        acts.append(a)
    return pre, acts


def mlp_forward(params: Params, X) -> np.ndarray:
    X = _check_inputs(params, X)
    _, acts = _forward(params, X)
    return (acts[-1] @ params.weights[-1].T) * params.scales[-1]


def _check_inputs(params: Params, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.spec.d:
        raise DimError(f"expected inputs of dimension {params.spec.d}, got shape {X.shape}")
    return X


def _deltas(params: Params, pre, cot: np.ndarray) -> list[np.ndarray]:
    """Backpropagate output cotangents ``cot`` (n, G, C) to every layer's pre-activations.

    Returns one (n, G, fan_out) array per layer, the last being ``cot`` itself.
    ReLU'(0) is taken as 0.
    """
    deltas = [cot]
    delta = cot
    for l in range(len(params.weights) - 1, 0, -1):
        W, s = params.weights[l], params.scales[l]
        delta = (delta @ W) * s * (pre[l - 1] > 0.0)[:, None, :]
        deltas.append(delta)
    return deltas[::-1]


def mlp_vjp(params: Params, x, cot) -> np.ndarray:
    """Rows cot_g^T J(x) for each cotangent g (rows of ``cot``, shape (G, C)); returns (G, p)."""
    X = _check_inputs(params, x)
    if X.shape[0] != 1:
        raise DimError("mlp_vjp takes a single input")
    cot = np.asarray(cot, dtype=np.float64)
    if cot.ndim != 2 or cot.shape[1] != params.spec.C:
        raise DimError(f"cotangents must have shape (G, {params.spec.C})")
    pre, acts = _forward(params, X)
    deltas = _deltas(params, pre, cot[None, :, :])
    blocks = [
        (dl[0][:, :, None] * a[0][None, None, :] * s).reshape(cot.shape[0], -1)
        for dl, a, s in zip(deltas, acts, params.scales)
    ]
    out = np.concatenate(blocks, axis=1)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite Jacobian entries")
    return out


def mlp_jacobian(params: Params, x) -> np.ndarray:
    """Exact parameter Jacobian of the C logits at x, shape (C, p).

    Column order is the row-major flattening of W_1, ..., W_{L+1}.
    """
    return mlp_vjp(params, x, np.eye(params.spec.C))


def ntk_finite(params: Params, D) -> GramMatrix:
    """(K_m)_ij = tr(J(x_i) J(x_j)^T), assembled layerwise."""
    X = _check_inputs(params, getattr(D, "points", D))
    n = X.shape[0]
    spec = params.spec
    if n > MAX_POINTS or n * spec.C * spec.m > MAX_DELTA_ENTRIES:
        raise BudgetError(f"ntk_finite budget exceeded (n={n}, C={spec.C}, m={spec.m})")
    pre, acts = _forward(params, X)
    cot = np.broadcast_to(np.eye(spec.C), (n, spec.C, spec.C))
    deltas = _deltas(params, pre, cot)
    K = np.zeros((n, n))
    for l, (dl, a, s) in enumerate(zip(deltas, acts, params.scales)):
        if l == len(deltas) - 1:
            back = np.full((n, n), float(spec.C))
        else:
            flat = dl.reshape(n, -1)
            back = flat @ flat.T
        K += (s * s) * back * (a @ a.T)
    upper = np.triu(K)
    return GramMatrix(upper + np.triu(upper, 1).T, psd=True)


def _relu_step(q: np.ndarray):
    """Arc-cosine maps for one ReLU layer: (next covariance, derivative covariance)."""
    diag = np.diag(q)
    norms = np.sqrt(np.outer(diag, diag))
    cos = np.clip(q / norms, -1.0, 1.0)
    np.fill_diagonal(cos, 1.0)
    theta = np.arccos(cos)
    q_next = norms / (2.0 * math.pi) * (np.sin(theta) + (math.pi - theta) * cos)
    qdot = (math.pi - theta) / (2.0 * math.pi)
    return q_next, qdot


def ntk_infinite_relu(spec: MLPSpec, D) -> GramMatrix:
    """Analytic infinite-width NTK of the network above, times C."""
    X = np.asarray(getattr(D, "points", D), dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != spec.d:
        raise DimError(f"expected inputs of dimension {spec.d}")
    if np.any(np.sum(X * X, axis=1) == 0.0):
        raise DomainError("zero input vector: angle undefined")
    q = (X @ X.T) / spec.d
    theta_k = q.copy()
    for _ in range(spec.L):
        q, qdot = _relu_step(q)
        theta_k = q + qdot * theta_k
    K = spec.C * theta_k
    upper = np.triu(K)
    return GramMatrix(upper + np.triu(upper, 1).T, psd=True)


class MLPJacobians:
    """Jacobian provider backed by an initialized MLP; inputs are raw points."""

    def __init__(self, params: Params):
        self.params = params
        self.C = params.spec.C
        self.p = params.spec.p

    def jacobian(self, x) -> np.ndarray:
        return mlp_jacobian(self.params, x)

    def vjp(self, x, cot) -> np.ndarray:
        return mlp_vjp(self.params, x, cot)

    def jacobians(self, X) -> np.ndarray:
        """Stacked Jacobians (n, C, p) for a batch; only for small nets."""
        return np.stack([self.jacobian(x) for x in np.asarray(X)])
