"""Desk-scale experiment families and their regression fits.

Every sweep is a grid of independent cells; each cell derives its own seed
from ``(master_seed, family, cell key)``, so rerunning a configuration gives
identical numbers regardless of the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FitError, UnsupportedAlpha
from .estimator import EstimatorConfig, KernelSource, estimate_reff
from .kernels import Kernel, gram, mc_kernel_moments, powerlaw_growth, sample_dataset
from .linalg_core import effective_rank_exact, operator_norm
from .ntk import MLPSpec, mlp_init, ntk_finite, ntk_infinite_relu

_LIMIT, _LIMIT_EST, _TAIL, _WIDTH, _GATE = 1, 2, 3, 4, 5


def derive_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class FitResult:
    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    residual_rms: float
    n_points: int

    @property
    def t_slope(self) -> float:
        if self.se_slope == 0.0:
            return math.copysign(math.inf, self.slope) if self.slope else 0.0
        return self.slope / self.se_slope

    def to_dict(self):
        d = dict(self.__dict__)
        d["t_slope"] = self.t_slope
        return d


def fit_line(x, y) -> FitResult:
    """Ordinary least squares y = intercept + slope * x with classical standard errors."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 3:
        raise FitError("need at least 3 points")
    if np.ptp(x) == 0.0:
        raise FitError("degenerate design: all x equal")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return FitResult(float(coef[0]), float(coef[1]), math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1]),
                     math.sqrt(float(resid @ resid) / x.size), int(x.size))


def fit_loglog(x, y) -> FitResult:
    return fit_line(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)))


@dataclass
class SweepResult:
    """Aggregated rows (one per value of the swept variable) plus raw cells."""

    family: str
    x_name: str
    rows: list
    cells: list
    metadata: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def _aggregate(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(np.mean(v)),
        "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
        "median": float(np.median(v)),
        "seeds": int(v.size),
    }


def limit_sweep(kernel: Kernel, dist: str, n_list, seeds: int = 20, *, d: int = 1,
                exact: bool = True, cfg: EstimatorConfig | None = None,
                master_seed: int = 0, threads: int = 1) -> SweepResult:
    """Effective rank of sampled Gram matrices across dataset sizes."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly ascending")
    cfg = cfg or EstimatorConfig()

    def cell(key):
        n, s = key
        D = sample_dataset(dist, n, d, derive_seed(master_seed, _LIMIT, n, s))
        out = {"n": n, "seed": s}
        if exact:
            out["reff"] = effective_rank_exact(gram(kernel, D))
        else:
            c = replace(cfg, master_seed=derive_seed(master_seed, _LIMIT_EST, n, s), threads=1)
            est = estimate_reff(KernelSource(kernel, D.points), n, c)
            out["reff"] = est.reff_hat
            out["se_reff"] = est.se_reff
        return out

    cells = _pmap(cell, [(n, s) for n in n_list for s in range(seeds)], threads)
    rows = []
    for n in n_list:
        vals = [c["reff"] for c in cells if c["n"] == n]
        row = {"n": n, **_aggregate(vals)}
        if not exact:
            ses = np.array([c["se_reff"] for c in cells if c["n"] == n])
            row["mean_se_reff"] = float(np.sqrt(np.mean(ses**2)))
        rows.append(row)
    meta = {"kernel": kernel.to_dict(), "dist": dist, "d": d, "exact": exact,
            "master_seed": master_seed}
    if not exact:
        meta["budget"] = {"M": cfg.M, "P": cfg.P, "G": cfg.G, "R": cfg.R}
    sweep = SweepResult("limit-sweep", "n", rows, cells, meta)
    if len(n_list) >= 3:
        sweep.fits["inverse_n"] = fit_affine_in_inverse_n(sweep)
    return sweep


def fit_affine_in_inverse_n(sweep: SweepResult) -> FitResult:
    """Least squares of mean r_eff on 1/n; the intercept is the fitted limit."""
    n = sweep.column("n").astype(float)
    if np.unique(n).size < 3:
        raise FitError("need at least 3 distinct n")
    return fit_line(1.0 / n, sweep.column("mean"))


def moment_comparison(kernel: Kernel, dist: str, sweep: SweepResult, *, d: int = 1,
                      S: int = 1_000_000, seed: int = 0) -> dict:
    """Monte-Carlo moment ratio next to the fitted 1/n intercept and slope."""
    mom = mc_kernel_moments(kernel, dist, d, S, seed)
    fit = sweep.fits.get("inverse_n") or fit_affine_in_inverse_n(sweep)
    return {
        "r_inf_moment": mom.r_inf_hat,
        "se_r_inf_moment": mom.se_r,
        "a_hat": mom.a_hat,
        "b_hat": mom.b_hat,
        "r_inf_fit": fit.intercept,
        "se_r_inf_fit": fit.se_intercept,
        "slope": fit.slope,
        "se_slope": fit.se_slope,
        "runs": sum(r["seeds"] for r in sweep.rows),
    }


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class TailResult:
    rows: list
    fits_vs_n: dict
    fits_vs_eps2: dict
    r_inf: float
    metadata: dict = field(default_factory=dict)


MIN_EXCEEDANCES = 5


def concentration_tail(kernel: Kernel, dist: str, n_list, eps_list, trials: int = 200, *,
                       r_inf: float | None = None, d: int = 1, moment_samples: int = 1_000_000,
                       master_seed: int = 0, threads: int = 1) -> TailResult:
    """Empirical Pr(|r_eff(K_n) - r_inf| > eps) with Wilson intervals and log-tail fits.

    The same ``trials`` Gram draws are reused for every eps at a given n, so
    frequencies are exactly non-increasing in eps.  Cells with fewer than
    ``MIN_EXCEEDANCES`` exceedances are dropped from the regressions.
    """
    if trials < 200:
        raise ValueError("trials must be >= 200")
    if r_inf is None:
        r_inf = mc_kernel_moments(kernel, dist, d, moment_samples, master_seed).r_inf_hat
    n_list = [int(n) for n in n_list]
    eps_list = sorted(float(e) for e in eps_list)

    def cell(key):
        n, t = key
        D = sample_dataset(dist, n, d, derive_seed(master_seed, _TAIL, n, t))
        return effective_rank_exact(gram(kernel, D))

    keys = [(n, t) for n in n_list for t in range(trials)]
    values = np.array(_pmap(cell, keys, threads)).reshape(len(n_list), trials)
    rows = []
    for i, n in enumerate(n_list):
        dev = np.abs(values[i] - r_inf)
        for eps in eps_list:
            k = int(np.sum(dev > eps))
            lo, hi = wilson_interval(k, trials)
            rows.append({"n": n, "eps": eps, "exceed": k, "trials": trials,
                         "prob": k / trials, "ci_lo": lo, "ci_hi": hi})

    def usable(sel):
        return [r for r in sel if r["exceed"] >= MIN_EXCEEDANCES]

    fits_n, fits_e = {}, {}
    for eps in eps_list:
        cells = usable(r for r in rows if r["eps"] == eps)
        if len({r["n"] for r in cells}) >= 3:
            fits_n[eps] = fit_line([r["n"] for r in cells], np.log([r["prob"] for r in cells]))
    for n in n_list:
        cells = usable(r for r in rows if r["n"] == n)
        if len(cells) >= 3:
            fits_e[n] = fit_line([r["eps"] ** 2 for r in cells], np.log([r["prob"] for r in cells]))
    meta = {"kernel": kernel.to_dict(), "dist": dist, "d": d, "trials": trials,
            "master_seed": master_seed}
    return TailResult(rows, fits_n, fits_e, float(r_inf), meta)


def width_sweep(spec: MLPSpec, D, m_list, seeds: int = 20, *, master_seed: int = 0,
                threads: int = 1) -> SweepResult:
    """Operator-norm kernel deviation and r_eff gap from the analytic limit, per width.

    ``spec.m`` is ignored; widths come from ``m_list``.  Aggregation uses
    medians over seeds.
    """
    m_list = [int(m) for m in m_list]
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("m_list must be strictly ascending")
    K_inf = ntk_infinite_relu(spec, D).entries
    r_inf = effective_rank_exact(K_inf)

    def cell(key):
        m, s = key
        params = mlp_init(replace(spec, m=m), derive_seed(master_seed, _WIDTH, m, s))
        K_m = ntk_finite(params, D).entries
        return {"m": m, "seed": s, "opnorm": operator_norm(K_m - K_inf),
                "gap": abs(effective_rank_exact(K_m) - r_inf)}

    cells = _pmap(cell, [(m, s) for m in m_list for s in range(seeds)], threads)
    rows = []
    for m in m_list:
        sel = [c for c in cells if c["m"] == m]
        op = np.array([c["opnorm"] for c in sel])
        gap = np.array([c["gap"] for c in sel])
        rows.append({"m": m, "median_opnorm": float(np.median(op)), "sd_opnorm": float(np.std(op)),
                     "median_gap": float(np.median(gap)), "sd_gap": float(np.std(gap)),
                     "seeds": len(sel)})
    meta = {"net": spec.to_dict(), "n": int(np.asarray(getattr(D, "points", D)).shape[0]),
            "reff_inf": r_inf, "master_seed": master_seed}
    sweep = SweepResult("width-sweep", "m", rows, cells, meta)
    if len(m_list) >= 3:
        sweep.fits["opnorm"] = fit_loglog(m_list, sweep.column("median_opnorm"))
        sweep.fits["gap"] = fit_loglog(m_list, sweep.column("median_gap"))
    return sweep


def validate_ntk_limit(spec: MLPSpec, D, m: int = 8192, seeds: int = 16, *,
                       master_seed: int = 0, z_max: float = 3.0) -> dict:
    """Compare the analytic limit with the Monte-Carlo mean of width-m kernels.

    Checked statistics: the trace, the sum of off-diagonal entries and four
    fixed entries (two diagonal, two off-diagonal).  Each must lie within
    ``z_max`` Monte-Carlo standard errors.
    """
    X = np.asarray(getattr(D, "points", D), dtype=np.float64)
    n = X.shape[0]
    K_inf = ntk_infinite_relu(spec, X).entries
    picks = [(0, 0), (n - 1, n - 1), (0, 1), (n // 2, n - 1)]

    def stats(K):
        off = float(np.sum(K) - np.trace(K))
        return np.array([np.trace(K), off] + [K[i, j] for i, j in picks])

    samples = np.array([
        stats(ntk_finite(mlp_init(replace(spec, m=m), derive_seed(master_seed, _GATE, s)), X).entries)
        for s in range(seeds)
    ])
    target = stats(K_inf)
    mean = samples.mean(0)
    se = samples.std(0, ddof=1) / math.sqrt(seeds)
    z = (mean - target) / se
    names = ["trace", "offdiag_sum"] + [f"K[{i},{j}]" for i, j in picks]
    return {
        "m": m, "seeds": seeds,
        "stats": {nm: {"analytic": float(t), "mc_mean": float(mu), "mc_se": float(s), "z": float(zz)}
                  for nm, t, mu, s, zz in zip(names, target, mean, se, z)},
        "passed": bool(np.all(np.abs(z) <= z_max)),
    }


def powerlaw_sweep(alpha_list, N_list, c: float = 1.0) -> dict:
    """r_inf(N) per alpha with the regime-appropriate summary.

    alpha > 1: plateau (value at the largest N and its last relative change);
    alpha == 1: ratio to (log N)^2 and its relative spread;
    1/2 < alpha < 1: log-log growth exponent against the predicted 2(1 - alpha).
    """
    N_list = [int(N) for N in N_list]
    rows, summaries = [], {}
    for alpha in alpha_list:
        if not alpha > 0.5:
            raise UnsupportedAlpha(f"alpha={alpha} <= 1/2")
        curve = powerlaw_growth(alpha, c, N_list)
        rows += [{"alpha": alpha, "N": N, "r_inf": r} for N, r in curve]
        Ns = np.array([N for N, _ in curve], dtype=float)
        rs = np.array([r for _, r in curve])
        if alpha > 1:
            change = abs(rs[-1] - rs[-2]) / rs[-1] if len(rs) > 1 else math.nan
            summaries[alpha] = {"regime": "plateau", "r_inf": float(rs[-1]), "last_rel_change": change}
        elif alpha == 1:
            ratio = rs / np.log(Ns) ** 2
            summaries[alpha] = {"regime": "log_squared", "ratios": ratio.tolist(),
                                "rel_spread": float((ratio.max() - ratio.min()) / ratio.min())}
        else:
            fit = fit_loglog(Ns, rs)
            summaries[alpha] = {"regime": "power", "exponent": fit.slope, "se": fit.se_slope,
                                "predicted": 2.0 * (1.0 - alpha)}
    return {"rows": rows, "summaries": summaries}
