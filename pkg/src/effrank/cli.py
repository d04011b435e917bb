"""Command-line front end.

Settings are layered: built-in defaults, then ``--config FILE`` (``key = value``
lines or a JSON object), then flags.  ``--threads`` (or ``EFFRANK_THREADS``)
and ``--out`` only affect execution and are not part of the echoed config, so
outputs are byte-identical across thread counts.

Exit codes: 0 success, 2 configuration error, 3 numerical or degenerate
estimate.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import experiments as ex
from .errors import ConfigError, DegenerateEstimate, EffrankError
from .estimator import EstimatorConfig, KernelSource, SketchProbeSource, estimate_reff
from .formats import config_hash, write_json, write_table_csv
from .kernels import DISTRIBUTIONS, MercerPowerLaw, gram, kernel_from_dict, mc_kernel_moments, \
    mercer_moments, sample_dataset
from .linalg_core import effective_rank_exact, grad_f, numerical_rank
from .ntk import MLPJacobians, MLPSpec, mlp_init, ntk_finite

log = logging.getLogger("effrank")

SUBCOMMANDS = ("exact", "estimate", "limit-sweep", "concentration", "powerlaw",
               "width-sweep", "grad-check", "moments")


def _int_list(s):
    return [int(float(v)) for v in _split(s)]


def _float_list(s):
    return [float(v) for v in _split(s)]


def _split(s):
    if isinstance(s, (list, tuple)):
        return list(s)
    return [v for v in str(s).replace(" ", "").split(",") if v]


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s):
    f = float(s)
    if f != int(f):
        raise ValueError(f"not an integer: {s!r}")
    return int(f)


# key -> (parser, default, help)
FIELDS = {
    "kernel": (str, "rbf", "kernel family: rbf | linear | poly | mercer"),
    "lengthscale": (float, 0.2, "RBF lengthscale"),
    "degree": (_int, 2, "polynomial degree"),
    "offset": (float, 1.0, "polynomial offset"),
    "alpha": (float, 2.0, "Mercer power-law exponent"),
    "scale": (float, 1.0, "Mercer eigenvalue scale"),
    "truncation": (_int, 50, "Mercer truncation N"),
    "net": (str, "none", "network: none | mlp (overrides --kernel where supported)"),
    "depth": (_int, 1, "hidden layers L"),
    "width": (_int, 256, "hidden width m"),
    "outputs": (_int, 1, "logits C"),
    "dist": (str, "uniform01", "data distribution: " + " | ".join(DISTRIBUTIONS)),
    "d": (_int, 0, "input dimension (0: 1 for kernels, 8 for networks)"),
    "n": (_int, 256, "dataset size"),
    "n_list": (_int_list, [100, 300, 1000, 3000], "comma-separated dataset sizes"),
    "m_list": (_int_list, [64, 128, 256, 512, 1024, 2048], "comma-separated widths"),
    "eps_list": (_float_list, [0.1, 0.2, 0.3, 0.4], "comma-separated deviations"),
    "alpha_list": (_float_list, [2.0, 1.0, 0.75], "comma-separated power-law exponents"),
    "N_list": (_int_list, [1000, 10000, 100000, 1000000], "comma-separated truncations"),
    "M": (_int, 800, "diagonal samples"),
    "P": (_int, 3000, "pair samples"),
    "G": (_int, 16, "output probes per entry"),
    "R": (_int, 128, "CountSketch buckets"),
    "probe": (str, "rademacher", "probe kind: rademacher | gaussian"),
    "frobenius_mode": (str, "split", "split | plain"),
    "estimator": (_bool, False, "limit-sweep: use the estimator instead of exact Grams"),
    "seeds": (_int, 20, "seeds per sweep cell"),
    "trials": (_int, 200, "trials per concentration cell"),
    "S": (_int, 1_000_000, "Monte-Carlo moment samples"),
    "gate_width": (_int, 0, "width-sweep: also validate the analytic limit at this width (0: skip)"),
    "seed": (_int, 0, "master seed"),
}


@dataclass
class RunConfig:
    subcommand: str
    values: dict
    out: Path
    threads: int

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    def echo(self) -> dict:
        return {"subcommand": self.subcommand, **self.values}


def read_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
        return data
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (part.strip() for part in line.split("=", 1))
        data[k] = v
    return data


def _validate(values: dict) -> None:
    bad = []
    positive = ("lengthscale", "scale", "truncation", "depth", "width", "outputs", "n",
                "M", "P", "G", "R", "seeds", "degree")
    bad += [k for k in positive if values[k] < 1 and k not in ("lengthscale", "scale")]
    bad += [k for k in ("lengthscale", "scale") if not values[k] > 0]
    if values["offset"] < 0:
        bad.append("offset")
    if values["d"] < 0:
        bad.append("d")
    if values["kernel"] not in ("rbf", "linear", "poly", "mercer"):
        bad.append("kernel")
    if values["net"] not in ("none", "mlp"):
        bad.append("net")
    if values["dist"] not in DISTRIBUTIONS:
        bad.append("dist")
    if values["probe"] not in ("rademacher", "gaussian"):
        bad.append("probe")
    if values["frobenius_mode"] not in ("split", "plain"):
        bad.append("frobenius_mode")
    if values["trials"] < 200:
        bad.append("trials")
    if values["S"] < 100:
        bad.append("S")
    if values["gate_width"] < 0:
        bad.append("gate_width")
    for k in ("n_list", "m_list", "N_list"):
        v = values[k]
        if not v or any(x < 1 for x in v) or any(b <= a for a, b in zip(v, v[1:])):
            bad.append(k)
    if not values["eps_list"] or any(e <= 0 for e in values["eps_list"]):
        bad.append("eps_list")
    if not values["alpha_list"] or any(a <= 0.5 for a in values["alpha_list"]):
        bad.append("alpha_list")
    if bad:
        raise ConfigError("invalid value for: " + ", ".join(bad), bad)


def parse_config(subcommand: str, file_values: dict, flag_values: dict,
                 out="out", threads=None) -> RunConfig:
    """Merge defaults < file < flags, coerce types and validate."""
    unknown = sorted(set(file_values) - set(FIELDS)) + sorted(set(flag_values) - set(FIELDS))
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown), unknown)
    values = {k: default for k, (_, default, _) in FIELDS.items()}
    bad = []
    for layer in (file_values, flag_values):
        for k, v in layer.items():
            try:
                values[k] = FIELDS[k][0](v)
            except (TypeError, ValueError):
                bad.append(k)
    if bad:
        raise ConfigError("type mismatch for: " + ", ".join(bad), bad)
    _validate(values)
    if threads is None:
        env = os.environ.get("EFFRANK_THREADS")
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise ConfigError("EFFRANK_THREADS must be an integer", ["threads"]) from None
    if threads < 1:
        raise ConfigError("threads must be >= 1", ["threads"])
    return RunConfig(subcommand, values, Path(out), int(threads))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="effrank",
        description="Effective rank of kernel Gram matrices: exact values, randomized "
                    "estimates and limit-law experiments.",
        epilog="Precedence: flags override --config file values, which override defaults.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS, allow_abbrev=False)
        p.add_argument("--config", help="key = value file or JSON object")
        p.add_argument("--out", help="output directory (default ./out)")
        p.add_argument("--threads", type=int, help="worker threads (default $EFFRANK_THREADS or 1)")
        for key, (_, default, help_) in FIELDS.items():
            flag = "--" + key.replace("_", "-")
            aliases = [flag] if flag == "--" + key else [flag, "--" + key]
            p.add_argument(*aliases, dest=key, help=f"{help_} (default {default})")
    return parser


def _dim(cfg: RunConfig) -> int:
    if cfg.d:
        return cfg.d
    return 8 if cfg.net == "mlp" else 1


def _kernel(cfg: RunConfig):
    return kernel_from_dict({
        "rbf": {"family": "rbf", "lengthscale": cfg.lengthscale},
        "linear": {"family": "linear"},
        "poly": {"family": "poly", "degree": cfg.degree, "offset": cfg.offset},
        "mercer": {"family": "mercer", "alpha": cfg.alpha, "scale": cfg.scale,
                   "truncation": cfg.truncation},
    }[cfg.kernel])


def _mlp(cfg: RunConfig) -> MLPSpec:
    return MLPSpec(_dim(cfg), cfg.width, cfg.depth, cfg.outputs)


def _estimator_cfg(cfg: RunConfig) -> EstimatorConfig:
    return EstimatorConfig(cfg.M, cfg.P, cfg.G, cfg.R, cfg.probe, cfg.frobenius_mode,
                           cfg.seed, threads=cfg.threads)


def _outputs(cfg: RunConfig, family: str):
    cfg.out.mkdir(parents=True, exist_ok=True)
    stem = f"{family}-{config_hash(cfg.echo())}"
    return cfg.out / f"{stem}.json", cfg.out / f"{stem}.csv"


def _exact_gram(cfg: RunConfig):
    D = sample_dataset(cfg.dist, cfg.n, _dim(cfg), cfg.seed)
    if cfg.net == "mlp":
        return D, ntk_finite(mlp_init(_mlp(cfg), cfg.seed), D)
    return D, gram(_kernel(cfg), D)


def cmd_exact(cfg: RunConfig) -> int:
    _, K = _exact_gram(cfg)
    payload = {"n": K.n, "reff": effective_rank_exact(K), "trace": K.trace, "frob2": K.frob2,
               "rank": numerical_rank(K) if K.n <= 1024 else None}
    path, _ = _outputs(cfg, "exact")
    write_json(path, payload, cfg.echo())
    print(f"r_eff = {payload['reff']:.6f} (n={K.n})  -> {path}")
    return 0


def cmd_estimate(cfg: RunConfig) -> int:
    ecfg = _estimator_cfg(cfg)
    D = sample_dataset(cfg.dist, cfg.n, _dim(cfg), cfg.seed)
    if cfg.net == "mlp":
        jp = MLPJacobians(mlp_init(_mlp(cfg), cfg.seed))
        source = SketchProbeSource(jp, D.points, G=cfg.G, R=cfg.R, probe=cfg.probe)
    else:
        source = KernelSource(_kernel(cfg), D.points)
    path, _ = _outputs(cfg, "estimate")
    try:
        est = estimate_reff(source, D.n, ecfg)
    except DegenerateEstimate as e:
        write_json(path, {"estimate": e.estimate.to_dict(), "error": str(e)}, cfg.echo())
        print(f"degenerate estimate: {e}", file=sys.stderr)
        return 3
    write_json(path, {"estimate": est.to_dict()}, cfg.echo())
    log.info("estimate wall time %.3fs", est.wall_time)
    print(f"r_eff_hat = {est.reff_hat:.6f} +/- {est.se_reff:.6f}  -> {path}")
    return 0


def cmd_limit_sweep(cfg: RunConfig) -> int:
    k = _kernel(cfg)
    sweep = ex.limit_sweep(k, cfg.dist, cfg.n_list, cfg.seeds, d=_dim(cfg),
                           exact=not cfg.estimator, cfg=_estimator_cfg(cfg),
                           master_seed=cfg.seed, threads=cfg.threads)
    payload = {"rows": sweep.rows, "metadata": sweep.metadata,
               "fits": {k_: f.to_dict() for k_, f in sweep.fits.items()}}
    if sweep.fits:
        payload["moment_comparison"] = ex.moment_comparison(k, cfg.dist, sweep, d=_dim(cfg),
                                                            S=cfg.S, seed=cfg.seed)
    jpath, cpath = _outputs(cfg, "limit-sweep")
    write_json(jpath, payload, cfg.echo())
    write_table_csv(cpath, sweep.rows, cfg.echo())
    last = sweep.rows[-1]
    print(f"r_eff(n={last['n']}) = {last['mean']:.6f} +/- {last['sd']:.6f}  -> {jpath}")
    return 0


def cmd_concentration(cfg: RunConfig) -> int:
    tail = ex.concentration_tail(_kernel(cfg), cfg.dist, cfg.n_list, cfg.eps_list, cfg.trials,
                                 d=_dim(cfg), moment_samples=cfg.S, master_seed=cfg.seed,
                                 threads=cfg.threads)
    payload = {"r_inf": tail.r_inf, "rows": tail.rows, "metadata": tail.metadata,
               "fits_vs_n": {str(e): f.to_dict() for e, f in tail.fits_vs_n.items()},
               "fits_vs_eps2": {str(n): f.to_dict() for n, f in tail.fits_vs_eps2.items()}}
    jpath, cpath = _outputs(cfg, "concentration")
    write_json(jpath, payload, cfg.echo())
    write_table_csv(cpath, tail.rows, cfg.echo())
    print(f"r_inf = {tail.r_inf:.6f}; {len(tail.fits_vs_n)} n-fits, "
          f"{len(tail.fits_vs_eps2)} eps-fits  -> {jpath}")
    return 0


def cmd_powerlaw(cfg: RunConfig) -> int:
    res = ex.powerlaw_sweep(cfg.alpha_list, cfg.N_list, cfg.scale)
    jpath, cpath = _outputs(cfg, "powerlaw")
    write_json(jpath, {"rows": res["rows"], "summaries": {str(a): s for a, s in res["summaries"].items()}},
               cfg.echo())
    write_table_csv(cpath, res["rows"], cfg.echo())
    last = res["rows"][-1]
    print(f"r_inf(alpha={last['alpha']}, N={last['N']}) = {last['r_inf']:.6f}  -> {jpath}")
    return 0


def cmd_width_sweep(cfg: RunConfig) -> int:
    spec = _mlp(cfg)
    dist = cfg.dist
    D = sample_dataset(dist, cfg.n, spec.d, cfg.seed)
    payload = {}
    if cfg.gate_width:
        gate = ex.validate_ntk_limit(spec, D, cfg.gate_width, master_seed=cfg.seed)
        payload["gate"] = gate
    sweep = ex.width_sweep(spec, D, cfg.m_list, cfg.seeds, master_seed=cfg.seed, threads=cfg.threads)
    payload.update(rows=sweep.rows, metadata=sweep.metadata,
                   fits={k: f.to_dict() for k, f in sweep.fits.items()})
    jpath, cpath = _outputs(cfg, "width-sweep")
    write_json(jpath, payload, cfg.echo())
    write_table_csv(cpath, sweep.rows, cfg.echo())
    last = sweep.rows[-1]
    print(f"median gap(m={last['m']}) = {last['median_gap']:.6g}  -> {jpath}")
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    _, K = _exact_gram(cfg)
    A = K.entries
    G = grad_f(A)
    h = 1e-6 * np.sqrt(K.frob2)
    fd = np.zeros_like(A)
    for i in range(A.shape[0]):
        for j in range(A.shape[1]):
            E = np.zeros_like(A)
            E[i, j] = h
            fd[i, j] = (_f(A + E) - _f(A - E)) / (2 * h)
    scale = np.max(np.abs(G))
    payload = {"n": K.n, "max_abs_err": float(np.max(np.abs(G - fd))),
               "max_rel_err": float(np.max(np.abs(G - fd)) / scale) if scale else 0.0,
               "euler_residual": float(np.sum(G * A))}
    path, _ = _outputs(cfg, "grad-check")
    write_json(path, payload, cfg.echo())
    print(f"grad_f max rel err = {payload['max_rel_err']:.3e}, <grad,K> = "
          f"{payload['euler_residual']:.3e}  -> {path}")
    return 0


def _f(A):
    return np.trace(A) ** 2 / np.sum(A * A)


def cmd_moments(cfg: RunConfig) -> int:
    k = _kernel(cfg)
    mom = mc_kernel_moments(k, cfg.dist, _dim(cfg), cfg.S, cfg.seed)
    payload = {"moments": mom.to_dict()}
    if isinstance(k, MercerPowerLaw):
        a, b, r = mercer_moments(k.spectrum())
        payload["mercer"] = {"a": a, "b": b, "r_inf": r}
    path, _ = _outputs(cfg, "moments")
    write_json(path, payload, cfg.echo())
    print(f"r_inf_hat = {mom.r_inf_hat:.6f} +/- {mom.se_r:.6f}  -> {path}")
    return 0


COMMANDS = {
    "exact": cmd_exact, "estimate": cmd_estimate, "limit-sweep": cmd_limit_sweep,
    "concentration": cmd_concentration, "powerlaw": cmd_powerlaw,
    "width-sweep": cmd_width_sweep, "grad-check": cmd_grad_check, "moments": cmd_moments,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = vars(parser.parse_args(argv))
    except SystemExit as e:
        return int(e.code or 0)
    sub = ns.pop("subcommand")
    file_path = ns.pop("config", None)
    out = ns.pop("out", "out")
    threads = ns.pop("threads", None)
    try:
        file_values = read_config_file(file_path) if file_path else {}
        cfg = parse_config(sub, file_values, ns, out=out, threads=threads)
    except (ConfigError, OSError) as e:
        print(f"effrank: config error: {e}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[sub](cfg)
    except ConfigError as e:
        print(f"effrank: config error: {e}", file=sys.stderr)
        return 2
    except (EffrankError, FloatingPointError) as e:
        print(f"effrank: numerical error: {e}", file=sys.stderr)
        return 3


def main() -> None:
    logging.basicConfig(level=os.environ.get("EFFRANK_LOG", "WARNING"))
    sys.exit(run())


if __name__ == "__main__":
    main()
