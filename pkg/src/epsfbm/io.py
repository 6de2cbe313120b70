"""Manifest and CSV serialization."""
from __future__ import annotations

import json
import math
import os

import numpy as np

from .epsilon_fbm import (
    DyadicPath,
    EpsilonCertificate,
    RecordParams,
    holder_error_bound,
    holder_norm_dyadic,
    truncation_level,
    uniform_error_bound,
)

SCHEMA = "epsfbm/1"


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)  # 'inf', 'nan'
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj))


def write_csv(path, times, columns, names) -> None:
    """Header row then one row per time with 17 significant digits."""
    cols = [np.asarray(times)] + [np.asarray(c) for c in columns]
    data = np.column_stack(cols)
    with open(path, "w") as fh:
        fh.write(",".join(["time"] + list(names)) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def fbm_manifest(path: DyadicPath, cert: EpsilonCertificate, seed: int, stream: int) -> dict:
    return {
        "schema": SCHEMA,
        "command": "fbm",
        "seed": seed,
        "stream": stream,
        "params": cert.params.as_dict(),
        "eps": cert.eps,
        "N": cert.N,
        "N_eps": cert.N_eps,
        "K_nu": cert.K_nu,
        "start_level": cert.start_level,
        "breaker_levels": list(cert.breaker_levels),
        "searched_level": cert.searched_level,
        "retries": cert.retries,
        "sup_bound": cert.sup_bound,
        "holder": None if cert.holder is None else
        {"alpha": cert.holder[0], "bound": cert.holder[1]},
        "level": path.level,
        "values": path.values,
    }


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _manifest_values(m: dict, base_dir) -> np.ndarray:
    if m.get("values") is not None:
        return np.asarray(m["values"], dtype=np.float64)
    _, data = read_csv(os.path.join(base_dir or ".", m["path_file"]))
    return data[:, 1]


def validate_fbm_manifest(m: dict, tol: float = 1e-12, base_dir=None) -> list:
    """Recompute the bound fields from a manifest; return a list of mismatches.

    When the path lives in a CSV (``path_file``) it is read relative to
    ``base_dir``.
    """
    problems = []
    if m.get("schema") != SCHEMA:
        problems.append(f"schema {m.get('schema')!r}")
    p = RecordParams(**m["params"])
    if truncation_level(m["eps"], m["N"], p) != m["N_eps"]:
        problems.append("N_eps")
    sb = uniform_error_bound(m["N_eps"], p)
    if abs(sb - m["sup_bound"]) > tol * max(1.0, abs(sb)):
        problems.append("sup_bound")
    if sb > m["eps"] * (1 + 1e-15):
        problems.append("sup_bound exceeds eps")
    vals = _manifest_values(m, base_dir)
    if vals.shape != (2 ** m["level"] + 1,):
        problems.append("values length")
    if m.get("holder"):
        a = m["holder"]["alpha"]
        path = DyadicPath(p.H, m["level"], vals).restrict(m["N"])
        hb = holder_norm_dyadic(path, a) + holder_error_bound(m["N"], a, p)
        if abs(hb - m["holder"]["bound"]) > tol * max(1.0, abs(hb)):
            problems.append("holder")
    return problems


def validate_sde_manifest(m: dict, tol: float = 1e-12) -> list:
    """Recompute the Euler constants and level stored in an SDE manifest."""
    from .sde_euler import VectorFieldSpec, euler_constants, sde_level

    problems = []
    if m.get("schema") != SCHEMA:
        problems.append(f"schema {m.get('schema')!r}")
    c = m["constants"]
    consts = euler_constants(VectorFieldSpec.from_dict(m["field"]), c["C_alpha"], m["alpha"])
    for key, ref in consts.as_dict().items():
        got = c.get(key)
        if isinstance(ref, float) and math.isfinite(ref):
            if got is None or abs(got - ref) > tol * max(1.0, abs(ref)):
                problems.append(key)
    if abs(m["G"] - consts.G) > tol * max(1.0, abs(consts.G)):
        problems.append("G")
    if sde_level(consts.G, m["eps"], m["alpha"]) != m["N_Y"]:
        problems.append("N_Y")
    return problems
