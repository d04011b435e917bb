"""Dense symmetric-matrix primitives.

Everything here is a pure function of its input.  The eigenvalue routine is a
parallel-ordered cyclic Jacobi solver, used as an oracle against the
entry-based effective rank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidMatrix, ZeroMatrix

# Above this order Jacobi sweeps (O(n^3) each) get slow in numpy; LAPACK takes over.
JACOBI_MAX_N = 512
PSD_RTOL = 1e-8
RANK_RTOL = 1e-8


@dataclass(frozen=True)
class GramMatrix:
    """Symmetric n x n matrix of kernel values."""

    entries: np.ndarray
    psd: bool = False

    def __post_init__(self):
        object.__setattr__(self, "entries", as_symmetric(self.entries))

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.entries
        return self.entries.astype(dtype)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def frob2(self) -> float:
        return float(np.sum(self.entries * self.entries))

    def eigenvalues(self) -> np.ndarray:
        return sym_eigenvalues(self.entries)

    def tol_psd(self) -> float:
        return PSD_RTOL * float(np.max(np.abs(self.entries)))


def as_symmetric(K, *, rtol: float = 1e-10) -> np.ndarray:
    """Validate ``K`` as a finite symmetric square matrix and return a float64 copy."""
    A = np.array(K, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidMatrix(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        raise InvalidMatrix("empty matrix")
    if not np.all(np.isfinite(A)):
        raise InvalidMatrix("matrix has non-finite entries")
    scale = float(np.max(np.abs(A)))
    if np.max(np.abs(A - A.T)) > rtol * max(scale, np.finfo(float).tiny):
        raise InvalidMatrix("matrix is not symmetric")
    return 0.5 * (A + A.T)


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 rounds of disjoint (p, q) pairs, p < q."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigenvalues(K, *, tol: float = 1e-15, max_sweeps: int = 50) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Each round annihilates n/2 disjoint off-diagonal pairs at once, so a sweep
    costs n-1 vectorized row/column updates.  Returns eigenvalues sorted
    descending.
    """
    A = as_symmetric(K)
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    total = np.sqrt(np.sum(A * A))
    if total == 0.0:
        return np.zeros(n)
    schedule = _round_robin(n)
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(A * A) - np.sum(A.diagonal() ** 2), 0.0))
        if off <= tol * total:
            break
        for P, Q in schedule:
            apq = A[P, Q]
            app = A[P, P]
            aqq = A[Q, Q]
            active = apq != 0.0
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                theta = (aqq - app) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(active & np.isfinite(t), t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = A[P, :], A[Q, :]
            A[P, :] = c[:, None] * rp - s[:, None] * rq
            A[Q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = A[:, P], A[:, Q]
            A[:, P] = cp * c - cq * s
            A[:, Q] = cp * s + cq * c
            A[P, Q] = 0.0
            A[Q, P] = 0.0
    return np.sort(A.diagonal())[::-1].copy()


def sym_eigenvalues(K, *, method: str = "auto") -> np.ndarray:
    """Eigenvalues of symmetric ``K`` sorted descending.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``JACOBI_MAX_N``, LAPACK above).
    """
    A = as_symmetric(K)
    if method == "auto":
        method = "jacobi" if A.shape[0] <= JACOBI_MAX_N else "lapack"
    if method == "jacobi":
        return jacobi_eigenvalues(A)
    if method == "lapack":
        return np.linalg.eigvalsh(A)[::-1].copy()
    raise ValueError(f"unknown method {method!r}")


def trace_frob2(K) -> tuple[float, float]:
    A = np.asarray(K, dtype=np.float64)
    return float(np.trace(A)), float(np.sum(A * A))


def effective_rank_exact(K) -> float:
    """tr(K)^2 / ||K||_F^2 from the diagonal sum and entrywise square sum."""
    A = as_symmetric(K)
    T, F2 = trace_frob2(A)
    if F2 == 0.0:
        raise ZeroMatrix("Frobenius norm is zero")
    return T * T / F2


def effective_rank_from_spectrum(eigenvalues) -> float:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    s2 = float(np.sum(lam * lam))
    if s2 == 0.0:
        raise ZeroMatrix("all eigenvalues are zero")
    return float(np.sum(lam)) ** 2 / s2


def grad_f(K) -> np.ndarray:
    """Gradient of f(K) = tr(K)^2/||K||_F^2: (2T/F^2) I - (2T^2/F^4) K."""
    A = as_symmetric(K)
    T, F2 = trace_frob2(A)
    if F2 == 0.0:
        raise ZeroMatrix("Frobenius norm is zero")
    G = (-2.0 * T * T / (F2 * F2)) * A
    G[np.diag_indices_from(G)] += 2.0 * T / F2
    return G


def operator_norm(K) -> float:
    """Spectral norm max|lambda| of a symmetric matrix."""
    lam = sym_eigenvalues(K)
    return float(max(abs(lam[0]), abs(lam[-1])))


def numerical_rank(K, *, rtol: float = RANK_RTOL) -> int:
    lam = sym_eigenvalues(K)
    top = max(abs(lam[0]), abs(lam[-1]))
    if top == 0.0:
        return 0
    return int(np.sum(lam > rtol * top))


def is_psd(K) -> bool:
    A = as_symmetric(K)
    tol = PSD_RTOL * float(np.max(np.abs(A)))
    return bool(sym_eigenvalues(A)[-1] >= -tol)
