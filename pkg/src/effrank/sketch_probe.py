"""CountSketch and the probe/sketch estimator of a single kernel entry.

Two hash families are available.  ``"table"`` (default) draws the bucket and
sign of every coordinate independently from a seeded generator.
``"multiply_shift"`` uses multiply-add-shift functions over 64-bit words,
which are only pairwise independent: their signs are correlated on
structured inputs and the sketch variance can then be far above
||u||^2 ||v||^2 / R, so it is kept for comparison only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimError, NumericalError

PROBE_KINDS = ("rademacher", "gaussian")
HASH_FAMILIES = ("table", "multiply_shift")
_U32 = np.uint64(32)
_U63 = np.uint64(63)


def _multiply_shift(rng: np.random.Generator, k: int, R: int, p: int):
    words = rng.integers(0, np.iinfo(np.uint64).max, size=(k, 4), dtype=np.uint64, endpoint=True)
    j = np.arange(p, dtype=np.uint64)[None, :]
    vh = words[:, 0:1] * j + words[:, 1:2]
    vs = words[:, 2:3] * j + words[:, 3:4]
    buckets = ((vh >> _U32) * np.uint64(R)) >> _U32
    signs = 1.0 - 2.0 * (vs >> _U63).astype(np.float64)
    return buckets.astype(np.intp), signs


def draw_tables(rng: np.random.Generator, k: int, R: int, p: int, hashing: str = "table"):
    """Buckets (k, p) in [0, R) and signs (k, p) in {-1, +1} for k independent sketches."""
    if hashing == "table":
        buckets = rng.integers(0, R, size=(k, p), dtype=np.intp)
        signs = 1.0 - 2.0 * rng.integers(0, 2, size=(k, p)).astype(np.float64)
        return buckets, signs
    if hashing == "multiply_shift":
        if p >= 2**32:
            raise DimError("multiply_shift hashing needs p < 2^32")
        return _multiply_shift(rng, k, R, p)
    raise ValueError(f"hashing must be one of {HASH_FAMILIES}")


@dataclass(frozen=True)
class CountSketchSpec:
    """Linear map R^p -> R^R: bucket r sums s(j) u_j over coordinates with h(j) = r."""

    R: int
    p: int
    seed: int | None = None
    hashing: str = "table"
    tables: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.R < 1 or self.p < 1:
            raise DimError("CountSketch needs R >= 1 and p >= 1")
        if self.tables is None:
            rng = np.random.default_rng(np.random.SeedSequence(int(self.seed or 0)))
            h, s = draw_tables(rng, 1, self.R, self.p, self.hashing)
            object.__setattr__(self, "tables", (h[0], s[0]))

    @classmethod
    def from_rng(cls, R: int, p: int, rng: np.random.Generator, hashing: str = "table"):
        h, s = draw_tables(rng, 1, R, p, hashing)
        return cls(R, p, None, hashing, (h[0], s[0]))

    @property
    def buckets(self) -> np.ndarray:
        return self.tables[0]

    @property
    def signs(self) -> np.ndarray:
        return self.tables[1]

    def matrix(self) -> np.ndarray:
        """Dense R x p representation (for tests and small problems)."""
        Phi = np.zeros((self.R, self.p))
        Phi[self.buckets, np.arange(self.p)] = self.signs
        return Phi


def countsketch_apply(cs: CountSketchSpec, u) -> np.ndarray:
    """Sketch the last axis of ``u``; leading axes are batched."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != cs.p:
        raise DimError(f"expected last dimension {cs.p}, got {u.shape[-1]}")
    lead = u.shape[:-1]
    rows = u.reshape(-1, cs.p) * cs.signs
    k = rows.shape[0]
    idx = (np.arange(k)[:, None] * cs.R + cs.buckets[None, :]).ravel()
    out = np.bincount(idx, weights=rows.ravel(), minlength=k * cs.R)
    return out.reshape(*lead, cs.R)


def sketch_inner(cs: CountSketchSpec, u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimError("sketch_inner needs two vectors of equal length")
    return float(countsketch_apply(cs, u) @ countsketch_apply(cs, v))


def sketch_inner_many(u, v, R: int, count: int, seed: int, hashing: str = "table",
                      chunk: int = 4096) -> np.ndarray:
    """<Phi_t u, Phi_t v> for ``count`` independently seeded sketches Phi_t."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise DimError("sketch_inner_many needs two vectors of equal length")
    p = u.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    out = np.empty(count)
    for start in range(0, count, chunk):
        k = min(chunk, count - start)
        h, s = draw_tables(rng, k, R, p, hashing)
        idx = (np.arange(k)[:, None] * R + h).ravel()
        su = np.bincount(idx, weights=(s * u).ravel(), minlength=k * R).reshape(k, R)
        sv = np.bincount(idx, weights=(s * v).ravel(), minlength=k * R).reshape(k, R)
        out[start:start + k] = np.sum(su * sv, axis=1)
    return out


@dataclass(frozen=True)
class ProbeSpec:
    kind: str = "rademacher"
    G: int = 1
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ValueError(f"probe kind must be one of {PROBE_KINDS}")
        if self.G < 1:
            raise ValueError("G must be >= 1")

    def draw(self, C: int) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence(int(self.seed or 0)))
        return draw_probes(self.kind, (self.G, C), rng)


def draw_probes(kind: str, shape, rng: np.random.Generator) -> np.ndarray:
    if kind == "rademacher":
        return 1.0 - 2.0 * rng.integers(0, 2, size=shape).astype(np.float64)
    if kind == "gaussian":
        return rng.standard_normal(shape)
    raise ValueError(f"unknown probe kind {kind!r}")


def _check_provider(jp, probes: np.ndarray, cs: CountSketchSpec | None):
    if probes.shape[-1] != jp.C:
        raise DimError(f"probe dimension {probes.shape[-1]} != C={jp.C}")
    if cs is not None and cs.p != jp.p:
        raise DimError(f"sketch input dimension {cs.p} != p={jp.p}")


def khat_from_probes(jp, x, x2, probes: np.ndarray, cs: CountSketchSpec | None) -> float:
    """(1/G) sum_g <Phi J(x)^T g, Phi J(x')^T g> for explicit probes (G, C).

    ``cs=None`` skips the sketch (Phi = identity).
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
    _check_provider(jp, probes, cs)
    a = jp.vjp(x, probes)
    b = a if x2 is x else jp.vjp(x2, probes)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalError("non-finite Jacobian products")
    if cs is not None:
        a = countsketch_apply(cs, a)
        b = a if x2 is x else countsketch_apply(cs, b)
    return float(np.sum(a * b) / probes.shape[0])


def khat(jp, x, x2, probes: ProbeSpec, cs: CountSketchSpec | None) -> float:
    """Probe/sketch estimate of k(x, x') = tr(J(x) J(x')^T)."""
    return khat_from_probes(jp, x, x2, probes.draw(jp.C), cs)


def khat_block(jp, rows, cols, kind: str, G: int, R: int | None,
               probe_rng: np.random.Generator, sketch_rng: np.random.Generator,
               jacobians: np.ndarray | None = None, hashing: str = "table",
               points=None) -> np.ndarray:
    """One independent k-hat per (rows[t], cols[t]) pair, fresh probes and sketch each.

    ``rows``/``cols`` are data indices; ``points[i]`` (or ``i`` itself when
    ``points`` is None) is what gets passed to ``jp``.  When the stacked
    Jacobians (n, C, p) are supplied the block is evaluated vectorized,
    otherwise each pair goes through two VJPs.
    """
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    B = rows.shape[0]
    p = jp.p
    probes = draw_probes(kind, (B, G, jp.C), probe_rng)
    if R is not None:
        h, s = draw_tables(sketch_rng, B, R, p, hashing)
    if jacobians is not None:
        A = np.einsum("bgc,bcp->bgp", probes, jacobians[rows])
        Bm = np.einsum("bgc,bcp->bgp", probes, jacobians[cols])
        if R is None:
            return np.einsum("bgp,bgp->b", A, Bm) / G
        idx = ((np.arange(B)[:, None, None] * G + np.arange(G)[None, :, None]) * R
               + h[:, None, :]).ravel()
        sa = np.bincount(idx, weights=(A * s[:, None, :]).ravel(), minlength=B * G * R)
        sb = np.bincount(idx, weights=(Bm * s[:, None, :]).ravel(), minlength=B * G * R)
        return np.sum((sa * sb).reshape(B, G * R), axis=1) / G
    out = np.empty(B)
    for t in range(B):
        cs = None if R is None else CountSketchSpec(R, p, None, hashing, (h[t], s[t]))
        if points is None:
            x, x2 = rows[t], cols[t]
        else:
            x, x2 = points[rows[t]], points[cols[t]]
        out[t] = khat_from_probes(jp, x, x2, probes[t], cs)
    return out


class FactorJacobians:
    """Jacobian provider over a fixed stack of "Jacobians" F[i] of shape (C, p).

    Inputs are integer indices.  Wrapping a square-root factor of a Gram matrix
    (C = 1) lets any PSD kernel go through the probe/sketch path.
    """

    def __init__(self, F):
        F = np.asarray(F, dtype=np.float64)
        if F.ndim == 2:
            F = F[:, None, :]
        self.F = F
        self.C = F.shape[1]
        self.p = F.shape[2]

    @classmethod
    def from_gram(cls, K) -> "FactorJacobians":
        """Rows of the symmetric square root of PSD ``K``."""
        K = np.asarray(K, dtype=np.float64)
        w, V = np.linalg.eigh(K)
        root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
        return cls(0.5 * (root + root.T))

    def jacobian(self, i) -> np.ndarray:
        return self.F[int(i)]

    def vjp(self, i, cot) -> np.ndarray:
        return np.asarray(cot, dtype=np.float64) @ self.F[int(i)]

    def jacobians(self, idx) -> np.ndarray:
        return self.F[np.asarray(idx, dtype=np.intp)]
