"""Command-line front end.

Subcommands ``fbm``, ``sde``, ``mlmc``, ``tune`` and ``bench``.  Exit codes:
0 success, 2 usage or domain error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as eio
from . import kernels
from .epsilon_fbm import (
    RecordParams,
    attach_holder,
    naive_last_breaker,
    sfbm,
    starting_level,
    truncation_level,
)
from .errors import DomainError, NumericalError
from .mlmc import BUILTIN, FunctionalSpec, allocate, estimate
from .rng import RngStream
from .sde_euler import VectorFieldSpec, ssde

DEFAULT_GRID = "1,2.5,5:0.1,0.2"


# ---------------------------------------------------------------- parsing

def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise DomainError(f"cannot parse number list {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise DomainError(f"cannot parse integer list {text!r}") from exc


def parse_grid(text: str) -> list:
    """``"r1,r2:d1,d2"`` to ``[(r1,d1), (r2,d1), ..., (r2,d2)]`` (rho fastest)."""
    if text.count(":") != 1:
        raise DomainError("grid must look like 'rho1,rho2,...:delta1,delta2,...'")
    rhos, deltas = (_floats(t) for t in text.split(":"))
    if not rhos or not deltas:
        raise DomainError("grid needs at least one rho and one delta")
    return [(r, d) for d in deltas for r in rhos]


def _common(sp, need_eps: bool = True):
    sp.add_argument("--hurst", type=float, required=True, help="Hurst index H in (0, 1)")
    sp.add_argument("--eps", type=float, required=need_eps, default=None, help="target tolerance")
    sp.add_argument("--rho", type=float, default=5.0, help="breaker threshold scale, 2(nu + nu*)")
    sp.add_argument("--delta", type=float, default=0.1, help="threshold decay slack, 0 < delta < H")
    sp.add_argument("--nu", type=float, default=None)
    sp.add_argument("--nustar", type=float, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--stream", type=int, default=0, help="independent stream index")
    sp.add_argument("--out", default=".", help="output directory")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="epsfbm", description="Certified fBM and fBM-driven SDE paths.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fbm", help="epsilon-strong fBM path with certificate")
    _common(sp)
    sp.add_argument("--alpha", type=float, default=None, help="also certify the alpha-Holder norm")

    sp = sub.add_parser("sde", help="epsilon-strong solution of an fBM-driven SDE")
    _common(sp)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--field", required=True, help="vector-field JSON file")
    sp.add_argument("--y0", default=None, help="initial value, comma separated")

    sp = sub.add_parser("mlmc", help="multilevel Monte Carlo estimate")
    _common(sp)
    sp.add_argument("--functional", default="terminal_sq", choices=sorted(BUILTIN))
    sp.add_argument("--field", default=None, help="vector-field JSON; estimates E[Y(1)]")
    sp.add_argument("--y0", default=None)
    sp.add_argument("--component", type=int, default=0)
    sp.add_argument("--alpha", type=float, default=0.75)
    sp.add_argument("--c-alpha", type=float, default=1.0, help="driver Holder bound for planning")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--certified", action="store_true", help="draw paths by the breaker search")

    sp = sub.add_parser("tune", help="truncation levels and breaker statistics over a grid")
    _common(sp)
    sp.add_argument("--grid", default=DEFAULT_GRID, help="'rho,...:delta,...'")
    sp.add_argument("--reps", type=int, default=100, help="replications for E[N]")
    sp.add_argument("--cap-level", type=int, default=16, help="grid level of the E[N] oracle")
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("bench", help="timing of refinement and kernels")
    _common(sp, need_eps=False)
    sp.add_argument("--levels", default="14,15,16,17,18,19")
    sp.add_argument("--dense-levels", default="8,9,10,11")
    sp.add_argument("--repeats", type=int, default=3)
    return ap


def _params(a) -> RecordParams:
    return RecordParams.make(a.hurst, a.rho, a.delta, a.nu, a.nustar)


def _config(a) -> dict:
    return {k: v for k, v in sorted(vars(a).items()) if k not in ("out",)}


def _y0(a, d: int) -> np.ndarray:
    if a.y0 is None:
        return np.zeros(d)
    y0 = np.array(_floats(a.y0))
    if y0.shape != (d,):
        raise DomainError(f"--y0 needs {d} values")
    return y0


def _outfile(a, name: str) -> str:
    os.makedirs(a.out, exist_ok=True)
    return os.path.join(a.out, name)


# --------------------------------------------------------------- commands

def cmd_fbm(a) -> int:
    p = _params(a)
    if a.alpha is not None and not 0 < a.alpha < p.hd:
        raise DomainError("--alpha must lie in (0, H - delta)")
    rng = RngStream(a.seed, a.stream)
    path, cert = sfbm(a.eps, p, rng)
    if a.alpha is not None:
        cert = attach_holder(path, cert, a.alpha)
    man = eio.fbm_manifest(path, cert, a.seed, a.stream)
    man["config"] = _config(a)
    if a.format == "csv":
        eio.write_csv(_outfile(a, "fbm_path.csv"), path.times, [path.values], ["value"])
        man["values"] = None
        man["path_file"] = "fbm_path.csv"
    eio.write_json(_outfile(a, "fbm_manifest.json"), man)
    print(f"N={cert.N} N_eps={cert.N_eps} sup_bound={cert.sup_bound:.6g} -> {a.out}")
    return 0


def cmd_sde(a) -> int:
    p = _params(a)
    field = VectorFieldSpec.load(a.field)
    y0 = _y0(a, field.d)
    res = ssde(a.eps, field, p, a.alpha, RngStream(a.seed, a.stream), y0=y0)
    man = {
        "schema": eio.SCHEMA, "command": "sde", "seed": a.seed, "stream": a.stream,
        "config": _config(a), "params": p.as_dict(), "eps": a.eps, "alpha": a.alpha,
        "field": field.source, "y0": y0, "N_Y": res.level, "G": res.constants.G,
        "constants": res.constants.as_dict(), "certificates": res.certificates,
    }
    names = [f"y{i}" for i in range(field.d)]
    if a.format == "csv":
        eio.write_csv(_outfile(a, "sde_path.csv"), res.times, list(res.values.T), names)
        man["path_file"] = "sde_path.csv"
    else:
        man["values"] = res.values
    eio.write_json(_outfile(a, "sde_manifest.json"), man)
    print(f"G={res.constants.G:.6g} N_Y={res.level} -> {a.out}")
    return 0


def cmd_mlmc(a) -> int:
    p = _params(a)
    if a.field is not None:
        field = VectorFieldSpec.load(a.field)
        spec = FunctionalSpec.sde(field, _y0(a, field.d), a.component, a.alpha, a.c_alpha)
    else:
        spec = FunctionalSpec.builtin(a.functional)
    if a.jobs < 1:
        raise DomainError("--jobs must be positive")
    plan = allocate(a.eps, spec, p)
    est = estimate(plan, spec, p, RngStream(a.seed, a.stream), jobs=a.jobs, certified=a.certified)
    rep = {"schema": eio.SCHEMA, "command": "mlmc", "seed": a.seed, "stream": a.stream,
           "config": _config(a), "functional": spec.name, "params": p.as_dict(),
           "plan": plan.as_dict(), "estimate": est.as_dict()}
    eio.write_json(_outfile(a, "mlmc_report.json"), rep)
    print(f"estimate={est.value:.6g} stderr={est.stderr:.3g} K={plan.K} cost={est.total_cost}")
    return 0


def _tune_cell(args):
    H, eps, rho, delta, seed, stream, idx, reps, cap = args
    p = RecordParams.make(H, rho, delta)
    n_star = starting_level(p)
    n_eps = truncation_level(eps, 1, p)
    levels, hit = naive_last_breaker(p, RngStream(seed, stream, (idx,)), cap, reps)
    return {"rho": rho, "delta": delta, "N_eps": n_eps, "N_star": n_star,
            "mean_N": float(levels.mean()), "cap_hit": int(hit.sum())}


def cmd_tune(a) -> int:
    _params(a)
    if a.reps < 1 or a.cap_level < 1 or a.jobs < 1:
        raise DomainError("--reps, --cap-level and --jobs must be positive")
    cells = [(a.hurst, a.eps, r, d, a.seed, a.stream, i, a.reps, a.cap_level)
             for i, (r, d) in enumerate(parse_grid(a.grid))]
    for c in cells:
        RecordParams.make(a.hurst, c[2], c[3])
    if a.jobs > 1:
        with ProcessPoolExecutor(max_workers=a.jobs) as ex:
            rows = list(ex.map(_tune_cell, cells))
    else:
        rows = [_tune_cell(c) for c in cells]
    print(f"{'rho':>6} {'delta':>6} {'N(eps)':>7} {'N*':>4} {'E[N]':>8}")
    for r in rows:
        mark = " cap+" if r["cap_hit"] else ""
        print(f"{r['rho']:6g} {r['delta']:6g} {r['N_eps']:7d} {r['N_star']:4d} {r['mean_N']:8.3f}{mark}")
    eio.write_json(_outfile(a, "tune.json"), {"schema": eio.SCHEMA, "command": "tune",
                                             "config": _config(a), "rows": rows})
    return 0


def cmd_bench(a) -> int:
    from . import bench

    p = _params(a)
    levels, dense = _ints(a.levels), _ints(a.dense_levels)
    if len(levels) < 2 or len(dense) < 2:
        raise DomainError("need at least two levels for a slope")
    ref = bench.refinement_timing(levels, p, a.seed, a.repeats)
    den = bench.dense_timing(dense, p.H, a.seed, max(1, a.repeats - 1))
    ker = bench.kernel_timing(a.repeats)
    s_ref = bench.loglog_slope([r["points"] * r["level"] for r in ref], [r["seconds"] for r in ref])
    s_den = bench.loglog_slope([r["points"] for r in den], [r["seconds"] for r in den])
    print("refinement (bridge recursion + breaker check)")
    for r in ref:
        print(f"  level {r['level']:2d}  points {r['points']:9d}  {r['seconds']:.4g} s  retries {r['retries']}")
    print(f"  slope vs 2^L log 2^L: {s_ref:.3f}")
    print("dense Cholesky")
    for r in den:
        print(f"  level {r['level']:2d}  points {r['points']:9d}  {r['seconds']:.4g} s")
    print(f"  slope vs 2^L: {s_den:.3f}")
    print(f"kernels (active backend: {kernels.BACKEND})")
    for r in ker:
        print(f"  {r['kernel']:18s} {r['backend']:9s} {r['seconds']:.4g} s")
    eio.write_json(_outfile(a, "bench.json"), {
        "schema": eio.SCHEMA, "command": "bench", "config": _config(a),
        "refinement": ref, "refinement_slope": s_ref, "dense": den, "dense_slope": s_den,
        "kernels": ker})
    return 0


COMMANDS = {"fbm": cmd_fbm, "sde": cmd_sde, "mlmc": cmd_mlmc, "tune": cmd_tune, "bench": cmd_bench}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return COMMANDS[a.command](a)
    except (DomainError, ValueError, OSError, KeyError) as exc:
        print(f"epsfbm: error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"epsfbm: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
