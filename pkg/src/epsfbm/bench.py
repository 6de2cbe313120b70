"""Timing helpers shared by the CLI ``bench`` command and ``benchmarks/``."""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from .epsilon_fbm import DyadicPath, RecordParams, extend_without_breakers
from .gaussian_core import GridGaussian, dyadic_fbm, fbm_cov_matrix, sample_mvn
from .rng import RngStream


def _best(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def refinement_timing(levels, p: RecordParams, seed: int = 0, repeats: int = 3) -> list:
    """Best-of-``repeats`` wall time to refine an exact level-1 path to each level.

    Each row records the level, the number of grid points, the time and the
    rejection retries of the first attempt (deterministic given the seed).
    """
    rows = []
    for L in levels:
        rng = RngStream(seed, L)
        base = DyadicPath(p.H, 1, dyadic_fbm(1, p.H, rng))
        retries = extend_without_breakers(base, L, p, RngStream(seed, L, (1,)))[1]
        t = _best(lambda: extend_without_breakers(base, L, p, rng), repeats)
        rows.append({"level": int(L), "points": 2**L + 1, "seconds": t, "retries": retries})
    return rows


def dense_timing(levels, H: float, seed: int = 0, repeats: int = 2) -> list:
    """Wall time of dense (Cholesky) sampling on ``D_L``."""
    rows = []
    for L in levels:
        t = np.arange(1, 2**L + 1) / 2**L
        rng = RngStream(seed, L)
        sec = _best(lambda: sample_mvn(GridGaussian(t, np.zeros(t.size), fbm_cov_matrix(t, t, H)), rng),
                    repeats)
        rows.append({"level": int(L), "points": 2**L + 1, "seconds": sec})
    return rows


def kernel_timing(repeats: int = 3, known: int = 64, new: int = 4096, holder_points: int = 1025) -> list:
    """Compare the compiled and numpy kernels on the same inputs."""
    rng = np.random.default_rng(0)
    kt = np.sort(rng.uniform(0.01, 1, known))
    nt = np.sort(rng.uniform(0.01, 1, new))
    ckk = fbm_cov_matrix(kt, kt, 0.7)
    cnk = fbm_cov_matrix(nt, kt, 0.7)
    resid = rng.standard_normal(known)
    ht = np.linspace(0, 1, holder_points)
    hv = np.cumsum(rng.standard_normal(holder_points))
    names = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])
    rows = []
    for name in names:
        kb = kernels.get_backend(name)

        def cond():
            u, piv, res = kb.condition_known(ckk, resid)
            kb.condition_new(np.array(cnk), u, piv, res, np.zeros(new))

        rows.append({"backend": name, "kernel": "bridge_recursion",
                     "seconds": _best(cond, repeats)})
        rows.append({"backend": name, "kernel": "holder_grid_norm",
                     "seconds": _best(lambda: kb.holder_grid_norm(ht, hv, 0.6), repeats)})
    return rows
