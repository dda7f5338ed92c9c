"""CSV and key=value writers with a provenance header."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from . import __version__
from .params import EquationParams, derive, range_condition


def fmt(x) -> str:
    """17 significant digits, stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def provenance(params: Optional[EquationParams], extra: Optional[Mapping] = None) -> dict:
    meta = {"code_version": __version__}
    if params is not None:
        ex = derive(params)
        meta.update(n=params.n, p=params.p, q=params.q, d=ex.d, lam=ex.lam,
                    alpha=ex.alpha, range_condition=range_condition(params))
    if extra:
        meta.update(extra)
    return meta


def write_table(path, columns: Mapping[str, np.ndarray], params: Optional[EquationParams],
                meta: Optional[Mapping] = None) -> Path:
    """Write equal-length columns as CSV preceded by '# key = value' lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = {k: np.asarray(v) for k, v in columns.items()}
    lengths = {v.shape[0] for v in cols.values()}
    if len(lengths) > 1:
        raise ValueError("columns must have equal length")
    with path.open("w", newline="") as fh:
        for k, v in provenance(params, meta).items():
            fh.write(f"# {k} = {fmt(v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(cols))
        for row in zip(*cols.values()):
            w.writerow([fmt(x) for x in row])
    return path


def read_table(path) -> tuple[dict, dict]:
    """Inverse of write_table: (meta as strings, columns as float arrays)."""
    meta, rows = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                meta[k.strip()] = v.strip()
            else:
                rows.append(line)
    reader = csv.reader(rows)
    header = next(reader)
    data = [list(map(float, r)) for r in reader if r]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return meta, {h: arr[:, i] for i, h in enumerate(header)}


def write_summary(path, entries: Mapping) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={fmt(v)}\n")
    return path


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            out[k] = v
    return out
