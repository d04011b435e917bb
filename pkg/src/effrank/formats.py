"""On-disk formats: Gram and dataset CSVs, result tables and JSON documents.

All writers are byte-deterministic: floats go through ``repr`` (shortest
round-trip form), keys are sorted, line endings are ``\\n``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from pathlib import Path

import numpy as np

from .kernels import Dataset
from .linalg_core import GramMatrix

SCHEMA_VERSION = "effrank/1"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x)) if math.isfinite(x) else ""
    return "" if x is None else str(x)


def write_gram_csv(path, K) -> None:
    A = np.asarray(K, dtype=np.float64)
    lines = [f"# gram n={A.shape[0]}"]
    lines += [",".join(repr(float(v)) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_gram_csv(path) -> GramMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    m = re.fullmatch(r"# gram n=(\d+)", lines[0].strip())
    if not m:
        raise ValueError("missing '# gram n=<n>' header")
    n = int(m.group(1))
    A = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
    if A.shape != (n, n):
        raise ValueError(f"header says n={n} but found shape {A.shape}")
    return GramMatrix(A)


def write_dataset_csv(path, D: Dataset) -> None:
    lines = [f"# dataset n={D.n} d={D.d} dist={D.dist} seed={D.seed}"]
    lines += [",".join(repr(float(v)) for v in row) for row in D.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_dataset_csv(path) -> Dataset:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    m = re.fullmatch(r"# dataset n=(\d+) d=(\d+) dist=(\S+) seed=(-?\d+)", lines[0].strip())
    if not m:
        raise ValueError("missing '# dataset n=<n> d=<d> dist=<name> seed=<seed>' header")
    n, d = int(m.group(1)), int(m.group(2))
    X = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln.strip()])
    if X.shape != (n, d):
        raise ValueError(f"header says ({n}, {d}) but found shape {X.shape}")
    return Dataset(X, m.group(3), int(m.group(4)))


def jsonable(obj):
    """Convert numpy scalars/arrays, dataclass-like results and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def write_json(path, payload: dict, config: dict) -> None:
    doc = {"schema": SCHEMA_VERSION, "config": config, **payload}
    Path(path).write_text(dumps(doc), encoding="utf-8")


def _cfg_cell(v) -> str:
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return _fmt(v)


def write_table_csv(path, rows: list, config: dict, columns: list | None = None) -> None:
    """CSV with a schema comment line, then one row per result row.

    Every config field appears as a leading ``config.<key>`` column (list
    values joined with ``;``) so each row is self-describing.
    """
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    cfg = jsonable(config)
    keys = sorted(cfg)
    header = [f"config.{k}" for k in keys] + list(columns)
    prefix = [_cfg_cell(cfg[k]) for k in keys]
    lines = [f"# schema={SCHEMA_VERSION}", ",".join(header)]
    lines += [",".join(prefix + [_fmt(r.get(c)) for c in columns]) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
