"""Closed-form bounded kernels, data distributions and kernel moments.

Kernels expose three vectorized evaluations: ``pairwise(X, Y)`` (all pairs),
``paired(X, Y)`` (row i against row i) and ``diag(X)``.  Every family here is
bounded on its domain, which is the working precondition for the
moment-ratio limit of the effective rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, DimError, DomainError, UnsupportedAlpha, ZeroSpectrum
from .linalg_core import GramMatrix

GRAM_MAX_N = 8192
DISTRIBUTIONS = ("uniform01", "sphere", "gaussian")


def _as_points(X) -> np.ndarray:
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise DimError(f"points must be a 2-D array, got ndim={A.ndim}")
    return A


class Kernel:
    """Base class; subclasses implement the three vectorized evaluations."""

    name = "kernel"

    def check(self, X: np.ndarray) -> None:
        pass

    def eval(self, x, y) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if x.shape != y.shape or x.ndim != 1:
            raise DimError(f"dimension mismatch: {x.shape} vs {y.shape}")
        return float(self.paired(x[None, :], y[None, :])[0])

    def pairwise(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def paired(self, X, Y) -> np.ndarray:
        raise NotImplementedError

    def diag(self, X) -> np.ndarray:
        X = _as_points(X)
        return self.paired(X, X)

    def spectrum(self) -> np.ndarray | None:
        """Mercer eigenvalues when known in closed form."""
        return None

    def bound(self) -> float:
        """Upper bound on |k| over the kernel's domain (inf if unbounded)."""
        return math.inf

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _pair_inputs(self, X, Y):
        X, Y = _as_points(X), _as_points(Y)
        if X.shape[1] != Y.shape[1]:
            raise DimError(f"dimension mismatch: d={X.shape[1]} vs d={Y.shape[1]}")
        self.check(X)
        self.check(Y)
        return X, Y


@dataclass(frozen=True)
class RBF(Kernel):
    """exp(-||x - y||^2 / (2 lengthscale^2))."""

    lengthscale: float = 1.0
    name = "rbf"

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise DomainError("lengthscale must be positive")

    def pairwise(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        sq = (np.sum(X * X, 1)[:, None] + np.sum(Y * Y, 1)[None, :]) - 2.0 * (X @ Y.T)
        np.maximum(sq, 0.0, out=sq)
        return np.exp(-sq / (2.0 * self.lengthscale**2))

    def paired(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        diff = X - Y
        return np.exp(-np.sum(diff * diff, 1) / (2.0 * self.lengthscale**2))

    def diag(self, X):
        return np.ones(_as_points(X).shape[0])

    def bound(self):
        return 1.0

    def to_dict(self):
        return {"family": self.name, "lengthscale": self.lengthscale}


@dataclass(frozen=True)
class Linear(Kernel):
    name = "linear"

    def pairwise(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return X @ Y.T

    def paired(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return np.sum(X * Y, 1)

    def to_dict(self):
        return {"family": self.name}


@dataclass(frozen=True)
class Polynomial(Kernel):
    """(x.y + offset)^degree."""

    degree: int = 2
    offset: float = 1.0
    name = "poly"

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise DomainError("degree must be an integer >= 1")
        if self.offset < 0:
            raise DomainError("offset must be >= 0")

    def pairwise(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return (X @ Y.T + self.offset) ** self.degree

    def paired(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return (np.sum(X * Y, 1) + self.offset) ** self.degree

    def to_dict(self):
        return {"family": self.name, "degree": self.degree, "offset": self.offset}


@dataclass(frozen=True)
class MercerPowerLaw(Kernel):
    """Truncated Mercer kernel on [0, 1] with eigenvalues scale * i^-alpha.

    The eigenfunctions sqrt(2) cos(2 pi i x) are orthonormal under the uniform
    distribution on [0, 1], so its moments are the partial sums of the
    spectrum and its square.
    """

    alpha: float = 2.0
    scale: float = 1.0
    truncation: int = 50
    name = "mercer"
    _lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0.5:
            raise UnsupportedAlpha("alpha must exceed 1/2")
        if not self.scale > 0:
            raise DomainError("scale must be positive")
        if int(self.truncation) != self.truncation or self.truncation < 1:
            raise DomainError("truncation must be an integer >= 1")
        i = np.arange(1, int(self.truncation) + 1, dtype=np.float64)
        object.__setattr__(self, "_lam", self.scale * i ** (-self.alpha))

    def check(self, X):
        if X.shape[1] != 1:
            raise DimError("MercerPowerLaw takes scalar inputs (d = 1)")
        if np.any(X < 0.0) or np.any(X > 1.0):
            raise DomainError("MercerPowerLaw inputs must lie in [0, 1]")

    def features(self, X) -> np.ndarray:
        """Eigenfunction values phi_i(x), shape (n, N)."""
        X = _as_points(X)
        self.check(X)
        i = np.arange(1, int(self.truncation) + 1, dtype=np.float64)
        return math.sqrt(2.0) * np.cos(2.0 * math.pi * X[:, :1] * i[None, :])

    def pairwise(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return (self.features(X) * self._lam) @ self.features(Y).T

    def paired(self, X, Y):
        X, Y = self._pair_inputs(X, Y)
        return np.sum(self.features(X) * self.features(Y) * self._lam, 1)

    def spectrum(self):
        return self._lam.copy()

    def bound(self):
        return 2.0 * float(np.sum(self._lam))

    def to_dict(self):
        return {
            "family": self.name,
            "alpha": self.alpha,
            "scale": self.scale,
            "truncation": int(self.truncation),
        }


def kernel_from_dict(spec: dict) -> Kernel:
    spec = dict(spec)
    family = spec.pop("family")
    cls = {"rbf": RBF, "linear": Linear, "poly": Polynomial, "mercer": MercerPowerLaw}.get(family)
    if cls is None:
        raise DomainError(f"unknown kernel family {family!r}")
    return cls(**spec)


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    dist: str
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def draw_points(dist: str, n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    if dist == "uniform01":
        return rng.random((n, d))
    if dist == "gaussian":
        return rng.standard_normal((n, d))
    if dist == "sphere":
        Z = rng.standard_normal((n, d))
        return Z / np.linalg.norm(Z, axis=1, keepdims=True)
    raise DomainError(f"unknown distribution {dist!r}; choose from {DISTRIBUTIONS}")


def sample_dataset(dist: str, n: int, d: int, seed: int) -> Dataset:
    if n < 1 or d < 1:
        raise DimError("n and d must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    return Dataset(draw_points(dist, n, d, rng), dist, int(seed))


def gram(k: Kernel, D) -> GramMatrix:
    """Dense Gram matrix; the upper triangle is mirrored so K == K.T exactly."""
    X = D.points if isinstance(D, Dataset) else _as_points(D)
    if X.shape[0] > GRAM_MAX_N:
        raise BudgetError(f"dense Gram limited to n <= {GRAM_MAX_N}")
    K = k.pairwise(X, X)
    K[np.diag_indices_from(K)] = k.diag(X)
    upper = np.triu(K)
    return GramMatrix(upper + np.triu(upper, 1).T, psd=True)


@dataclass(frozen=True)
class MomentEstimate:
    a_hat: float
    b_hat: float
    r_inf_hat: float
    se_a: float
    se_b: float
    se_r: float
    S: int

    def to_dict(self):
        return dict(self.__dict__)


def mercer_moments(lam) -> tuple[float, float, float]:
    """(sum lam, sum lam^2, ratio of the squared first to the second)."""
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise ZeroSpectrum("eigenvalues must be non-negative")
    a = float(np.sum(lam))
    b = float(np.sum(lam * lam))
    if b == 0.0:
        raise ZeroSpectrum("spectrum is identically zero")
    return a, b, a * a / b


def powerlaw_growth(alpha: float, c: float, N_list) -> list[tuple[int, float]]:
    if not alpha > 0.5:
        raise UnsupportedAlpha("alpha <= 1/2: the squared spectrum is not summable")
    Ns = [int(N) for N in N_list]
    if any(b < a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("N_list must be ascending")
    i = np.arange(1, Ns[-1] + 1, dtype=np.float64)
    lam = c * i ** (-alpha)
    s1 = np.cumsum(lam)
    s2 = np.cumsum(lam * lam)
    return [(N, float(s1[N - 1] ** 2 / s2[N - 1])) for N in Ns]


def mc_kernel_moments(k: Kernel, dist: str, d: int, S: int, seed: int) -> MomentEstimate:
    """Monte-Carlo a = E k(x,x) and b = E k(x,x')^2.

    ``a`` uses S fresh points; ``b`` uses 2S further points paired disjointly.
    """
    if S < 100:
        raise ValueError("S must be >= 100")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    X = draw_points(dist, S, d, rng)
    diag = k.diag(X)
    Y = draw_points(dist, 2 * S, d, rng)
    off = k.paired(Y[:S], Y[S:]) ** 2
    a, b = float(np.mean(diag)), float(np.mean(off))
    se_a = float(np.std(diag, ddof=1) / math.sqrt(S))
    se_b = float(np.std(off, ddof=1) / math.sqrt(S))
    r = a * a / b
    se_r = r * math.sqrt(4.0 * (se_a / a) ** 2 + (se_b / b) ** 2)
    return MomentEstimate(a, b, r, se_a, se_b, se_r, S)
