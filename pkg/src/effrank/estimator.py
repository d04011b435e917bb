"""Randomized estimate of the effective rank from sampled kernel entries.

The trace is estimated from M diagonal entries and the squared Frobenius norm
from P uniformly drawn (row, column) pairs, both with replacement.  Entries
come from an *entry source*: exact values, or probe/sketch estimates over
parameter Jacobians.

Randomness is keyed by (master_seed, phase, role, block): samples are grouped
into fixed blocks of ``BLOCK`` draws, and each block gets its own generators
for indices, probes and sketches.  Results therefore do not depend on how
many worker threads evaluate the blocks.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateEstimate
from .sketch_probe import HASH_FAMILIES, PROBE_KINDS, khat_block

BLOCK = 256
FROBENIUS_MODES = ("split", "plain")

_DIAG, _PAIR = 0, 1
_INDEX, _PROBE, _SKETCH = 0, 1, 2


def substream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=tuple(key)))


@dataclass(frozen=True)
class EstimatorConfig:
    M: int = 800
    P: int = 3000
    G: int = 16
    R: int = 128
    probe: str = "rademacher"
    frobenius_mode: str = "split"
    master_seed: int = 0
    exhaustive: bool = False
    threads: int = 1

    def __post_init__(self):
        bad = [k for k in ("M", "P", "G", "R") if int(getattr(self, k)) < 1]
        if self.probe not in PROBE_KINDS:
            bad.append("probe")
        if self.frobenius_mode not in FROBENIUS_MODES:
            bad.append("frobenius_mode")
        if self.threads < 1:
            bad.append("threads")
        if bad:
            raise ConfigError(f"invalid estimator settings: {', '.join(bad)}", bad)


@dataclass
class Component:
    """One subsampled sum: value, its estimated variance, and the raw draws."""

    value: float
    variance: float
    samples: np.ndarray = field(repr=False)


@dataclass
class Estimate:
    trace_hat: float
    frob2_hat: float
    reff_hat: float
    se_reff: float
    var_trace: float
    var_frob2: float
    config: EstimatorConfig
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        """JSON-ready fields; wall time is left out so outputs stay reproducible."""
        c = self.config
        return {
            "trace_hat": _finite_or_none(self.trace_hat),
            "frob2_hat": _finite_or_none(self.frob2_hat),
            "reff_hat": _finite_or_none(self.reff_hat),
            "se_reff": _finite_or_none(self.se_reff),
            "var_trace": _finite_or_none(self.var_trace),
            "var_frob2": _finite_or_none(self.var_frob2),
            "M": c.M, "P": c.P, "G": c.G, "R": c.R,
            "probe": c.probe,
            "mode": c.frobenius_mode,
            "exhaustive": c.exhaustive,
            "seed": c.master_seed,
        }


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


class ExactGramSource:
    """Entries read from a dense Gram matrix."""

    def __init__(self, K):
        self.K = np.asarray(K, dtype=np.float64)
        self.n = self.K.shape[0]

    def sample(self, rows, cols, probe_rng, sketch_rng):
        return self.K[rows, cols]


class KernelSource:
    """Entries evaluated on demand from a kernel, without assembling the Gram."""

    def __init__(self, kernel, X):
        self.kernel = kernel
        self.X = np.asarray(X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        self.n = self.X.shape[0]

    def sample(self, rows, cols, probe_rng, sketch_rng):
        return self.kernel.paired(self.X[rows], self.X[cols])


class SketchProbeSource:
    """Entries k-hat(x_i, x_j) from output probes and a fresh CountSketch per draw.

    ``points`` are passed to ``jp``; when omitted, data indices are passed
    instead (as for ``FactorJacobians``).  If the provider can stack Jacobians
    and n*C*p stays under ``cache_limit`` they are computed once and blocks
    are evaluated vectorized.
    """

    def __init__(self, jp, points=None, n=None, G=16, R=128, probe="rademacher",
                 hashing="table", cache_limit=20_000_000):
        if hashing not in HASH_FAMILIES:
            raise ConfigError(f"unknown hashing {hashing!r}", ["hashing"])
        self.jp = jp
        self.points = None if points is None else np.asarray(points)
        self.n = int(n if n is not None else len(self.points))
        self.G, self.R, self.probe, self.hashing = int(G), R, probe, hashing
        self.jacobians = None
        if hasattr(jp, "jacobians") and self.n * jp.C * jp.p <= cache_limit:
            stack = self.points if self.points is not None else np.arange(self.n)
            self.jacobians = jp.jacobians(stack)

    def sample(self, rows, cols, probe_rng, sketch_rng):
        return khat_block(self.jp, rows, cols, self.probe, self.G, self.R,
                          probe_rng, sketch_rng, jacobians=self.jacobians,
                          hashing=self.hashing, points=self.points)


def sketch_source(jp, points, cfg: EstimatorConfig, n=None, **kw) -> SketchProbeSource:
    return SketchProbeSource(jp, points, n=n, G=cfg.G, R=cfg.R, probe=cfg.probe, **kw)


def _map_blocks(fn, nblocks: int, threads: int) -> list:
    if threads <= 1 or nblocks <= 1:
        return [fn(b) for b in range(nblocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(nblocks)))


def _sample_var(x: np.ndarray) -> float:
    return float(np.var(x, ddof=1)) if x.size > 1 else math.nan


def estimate_trace(source, n: int, cfg: EstimatorConfig) -> Component:
    """(n/M) sum_t k-hat(x_{i_t}, x_{i_t}) with i_t uniform on [n]."""
    total = n if cfg.exhaustive else cfg.M
    nblocks = -(-total // BLOCK)

    def block(b):
        size = min(BLOCK, total - b * BLOCK)
        if cfg.exhaustive:
            idx = np.arange(b * BLOCK, b * BLOCK + size)
        else:
            idx = substream(cfg.master_seed, _DIAG, _INDEX, b).integers(0, n, size)
        return source.sample(idx, idx, substream(cfg.master_seed, _DIAG, _PROBE, b),
                             substream(cfg.master_seed, _DIAG, _SKETCH, b))

    Z = np.concatenate(_map_blocks(block, nblocks, cfg.threads))
    value = n * float(np.mean(Z))
    var = 0.0 if cfg.exhaustive else n * n * _sample_var(Z) / cfg.M
    return Component(value, var, Z)


def estimate_frobenius(source, n: int, cfg: EstimatorConfig) -> Component:
    """(n^2/P) sum_t W_t over uniform pairs (a_t, b_t), diagonal pairs included.

    Split mode takes W_t as the product of two independent k-hat draws, which
    is unbiased for k(x_a, x_b)^2; plain mode squares a single draw and is
    biased upward by Var(k-hat).
    """
    total = n * n if cfg.exhaustive else cfg.P
    nblocks = -(-total // BLOCK)

    def block(b):
        size = min(BLOCK, total - b * BLOCK)
        if cfg.exhaustive:
            flat = np.arange(b * BLOCK, b * BLOCK + size)
            rows, cols = flat // n, flat % n
        else:
            ij = substream(cfg.master_seed, _PAIR, _INDEX, b).integers(0, n, (2, size))
            rows, cols = ij[0], ij[1]
        prng = substream(cfg.master_seed, _PAIR, _PROBE, b)
        srng = substream(cfg.master_seed, _PAIR, _SKETCH, b)
        first = source.sample(rows, cols, prng, srng)
        if cfg.frobenius_mode == "plain":
            return first * first
        return first * source.sample(rows, cols, prng, srng)

    W = np.concatenate(_map_blocks(block, nblocks, cfg.threads))
    value = n * n * float(np.mean(W))
    var = 0.0 if cfg.exhaustive else n**4 * _sample_var(W) / cfg.P
    return Component(value, var, W)


def estimate_reff(source, n: int, cfg: EstimatorConfig) -> Estimate:
    """Plug-in ratio trace_hat^2 / frob2_hat with a delta-method standard error."""
    t0 = time.perf_counter()
    tr = estimate_trace(source, n, cfg)
    fr = estimate_frobenius(source, n, cfg)
    wall = time.perf_counter() - t0
    if not fr.value > 0.0:
        est = Estimate(tr.value, fr.value, math.nan, math.nan, tr.variance, fr.variance, cfg, wall)
        raise DegenerateEstimate(f"non-positive Frobenius estimate {fr.value:.6g}", est)
    reff = tr.value**2 / fr.value
    rel = 4.0 * tr.variance / tr.value**2 + fr.variance / fr.value**2 if tr.value != 0 else math.inf
    se = reff * math.sqrt(rel) if math.isfinite(rel) else math.nan
    return Estimate(tr.value, fr.value, reff, se, tr.variance, fr.variance, cfg, wall)
