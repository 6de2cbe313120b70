"""Compiled versus pure-Python kernels, plus refinement scaling.

Run with ``python3 benchmarks/bench_kernels.py``.  Set ``EPSFBM_PURE_PYTHON=1``
to make the library itself load the numpy fallback.
"""
from __future__ import annotations

import argparse

from epsfbm import kernels
from epsfbm.bench import kernel_timing, loglog_slope, refinement_timing
from epsfbm.epsilon_fbm import RecordParams


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--known", type=int, default=64)
    ap.add_argument("--new", type=int, default=4096)
    ap.add_argument("--levels", default="14,15,16,17,18,19")
    a = ap.parse_args(argv)

    print(f"active backend: {kernels.BACKEND}")
    rows = kernel_timing(a.repeats, a.known, a.new)
    base = {r["kernel"]: r["seconds"] for r in rows if r["backend"] == "python"}
    for r in rows:
        speedup = base[r["kernel"]] / r["seconds"]
        print(f"{r['kernel']:18s} {r['backend']:9s} {r['seconds'] * 1e3:9.3f} ms  x{speedup:.2f}")

    p = RecordParams.make(0.8, 5.0, 0.1)
    ref = refinement_timing([int(x) for x in a.levels.split(",")], p, repeats=3)
    for r in ref:
        print(f"refine to level {r['level']:2d}: {r['seconds'] * 1e3:9.3f} ms")
    slope = loglog_slope([r["points"] * r["level"] for r in ref], [r["seconds"] for r in ref])
    print(f"slope against 2^L log 2^L: {slope:.3f}")


if __name__ == "__main__":
    main()
