"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``.  The exactness check at
H=0.45 draws 10^4 paths on a level-23 grid and takes on the order of two
hours on one core.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import stats

import oracles
from epsfbm.bench import loglog_slope, refinement_timing
from epsfbm.epsilon_fbm import (
    DyadicPath,
    RecordParams,
    breaker_levels_in,
    ecm,
    extend_without_breakers,
    fbm_holder_certificate,
    forward_tau,
    g_prob,
    sfbm,
    slrb,
    snrb,
    starting_level,
    truncation_level,
)
from epsfbm.errors import DomainError
from epsfbm.gaussian_core import dyadic_fbm, fbm_cov_matrix
from epsfbm.mlmc import FunctionalSpec, allocate, estimate
from epsfbm.rng import RngStream
from epsfbm.sde_euler import euler_constants, euler_solve, linear_field

GRID = [(1.0, 0.1), (2.5, 0.1), (5.0, 0.1), (1.0, 0.2), (2.5, 0.2), (5.0, 0.2)]


@pytest.fixture
def report(capsys):
    def _report(name: str, ok: bool, detail: str = "") -> None:
        with capsys.disabled():
            print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _report


# ------------------------------------------------------------------ 1

def _table():
    t0 = time.perf_counter()
    n_star = [starting_level(RecordParams.make(0.8, r, d)) for r, d in GRID]
    n08 = [truncation_level(0.1, 1, RecordParams.make(0.8, r, d)) for r, d in GRID]
    n045 = [truncation_level(0.1, 1, RecordParams.make(0.45, r, d)) for r, d in GRID]
    return n_star, n08, n045, time.perf_counter() - t0


def test_table_reproduction_matching_cells(report):
    n_star, n08, n045, secs = _table()
    ok = (n_star == [38, 21, 1, 16, 6, 1] and n08 == [7, 9, 11, 9, 11, 12]
          and n045[:5] == [16, 20, 23, 24, 30] and secs < 1.0)
    report("table reproduction (N*, N(eps) H=0.8, first five N(eps) H=0.45)", ok,
           f"N*={n_star} N08={n08} N045={n045[:5]} in {secs:.3f}s")
    assert n_star == [38, 21, 1, 16, 6, 1]
    assert n08 == [7, 9, 11, 9, 11, 12]
    assert n045[:5] == [16, 20, 23, 24, 30]
    assert secs < 1.0


@pytest.mark.xfail(strict=True, reason="closed form gives 34 for H=0.45, rho=5, delta=0.2; "
                                       "the reference table lists 31 (see decision ledger)")
def test_table_reproduction_h045_rho5_delta02(report):
    n = truncation_level(0.1, 1, RecordParams.make(0.45, 5.0, 0.2))
    report("table reproduction (N(eps) H=0.45, rho=5, delta=0.2 == 31)", n == 31,
           f"computed {n}")
    assert n == 31


# ------------------------------------------------------------------ 2

@pytest.mark.parametrize("H", [0.8, 0.45])
def test_exactness_of_marginals(H, report):
    p = RecordParams.make(H, 5.0, 0.1)
    n = 10**4
    x = np.empty((n, 3))
    t0 = time.perf_counter()
    for i in range(n):
        path, cert = sfbm(0.1, p, RngStream(2024, i))
        m = 2**path.level
        x[i] = path.values[[m // 4, m // 2, m]]
    secs = time.perf_counter() - t0
    pv = stats.kstest(x[:, 2], "norm").pvalue
    t = np.array([0.25, 0.5, 1.0])
    err = np.abs(x.T @ x / n - fbm_cov_matrix(t, t, H)).max()
    ok = pv > 0.01 and err <= 0.03
    report(f"exactness of marginals H={H}", ok,
           f"KS p={pv:.3f} max cov err={err:.4f} ({secs:.0f}s)")
    assert pv > 0.01
    assert err <= 0.03


# ------------------------------------------------------------------ 3

@pytest.mark.parametrize("H", [0.8, 0.6])
def test_certificate_validity(H, report):
    p = RecordParams.make(H, 5.0, 0.1)
    worst, violations = 0.0, 0
    for i in range(100):
        r = RngStream(77, i)
        path, cert = sfbm(0.05, p, r)
        fine, _ = extend_without_breakers(path, path.level + 4, p, r)
        gap = float(np.abs(fine.values - path(fine.times)).max())
        worst = max(worst, gap / cert.sup_bound)
        violations += gap > cert.sup_bound
    report(f"certificate validity H={H}", violations == 0,
           f"violations={violations}/100, worst gap/bound={worst:.3f}")
    assert violations == 0


# ------------------------------------------------------------------ 4

def test_lemma_numerics(report):
    worst_var = 0.0
    for H in (0.1, 0.3, 0.45, 0.5, 0.7, 0.8, 0.9):
        for k in range(1, 9):
            b = 2 * 2.0 ** (-2 * k * H)
            worst_var = max(worst_var,
                            oracles.midpoint_conditional_variances(k, H).max() - b,
                            oracles.midpoint_variances(k, H).max() - b)
    r = RngStream(31)
    worst_h = -math.inf
    top = 10
    t = np.linspace(0, 1, 2**top + 1)
    for i in range(100):
        H = (0.55, 0.7, 0.85)[i % 3]
        a = H - 0.1
        v = dyadic_fbm(top, H, r)
        for k in range(1, 7):
            dk, dk1 = v[:: 2 ** (top - k)], v[:: 2 ** (top - k + 1)]
            diff = (np.interp(t, np.arange(2**k + 1) / 2**k, dk)
                    - np.interp(t, np.arange(2 ** (k - 1) + 1) / 2 ** (k - 1), dk1))
            dev = np.abs(dk[1::2] - 0.5 * (dk[:-1:2] + dk[2::2])).max()
            worst_h = max(worst_h, oracles.brute_holder(diff, a) - 2 ** (a * (k - 1) + 2) * dev)
    ok = worst_var <= 1e-10 and worst_h <= 1e-9
    report("lemma-level numerics", ok,
           f"max variance excess={worst_var:.3g}, max Holder excess={worst_h:.3g}")
    assert worst_var <= 1e-10
    assert worst_h <= 1e-9


# ------------------------------------------------------------------ 5

CM = RecordParams.make(0.8, 1.2, 0.1)
CM_SAMPLES = 10**5


@pytest.mark.xfail(strict=True, raises=DomainError,
                   reason="the breaker search requires n >= N*(1.2, 0.1) = 35; "
                          "at n=1 it is undefined (see decision ledger)")
def test_change_of_measure_snrb_at_stated_instance(report):
    path = DyadicPath(0.8, 1, dyadic_fbm(1, 0.8, RngStream(5)))
    try:
        snrb(path, CM, RngStream(6))
    except DomainError as exc:
        report("change of measure: SNRB at n=1, H=0.8, rho=1.2, delta=0.1", False, str(exc))
        raise
    report("change of measure: SNRB at n=1, H=0.8, rho=1.2, delta=0.1", True)


def test_change_of_measure_identity_stated_instance(report):
    # For each offset m the tilted proposal is an importance sampler for
    # P_1(tau = 1 + m | B_1): E_Q[g(m) Theta / R 1{...}] equals it exactly.
    path = DyadicPath(0.8, 1, dyadic_fbm(1, 0.8, RngStream(41)))
    top = 6
    r = RngStream(42)
    fwd = np.array([forward_tau(path, CM, r, top) or 0 for _ in range(CM_SAMPLES)])
    lines, ok = [], True
    for m in range(1, top):
        gm = g_prob(1, m, CM)
        rr = RngStream(43, m)
        w = np.array([gm * ecm(path, m, CM, rr, enforce_bound=False).weight
                      for _ in range(CM_SAMPLES)])
        pf = float(np.mean(fwd == 1 + m))
        se = math.sqrt(w.var() / CM_SAMPLES + pf * (1 - pf) / CM_SAMPLES)
        good = abs(w.mean() - pf) <= 3 * se + 1e-15
        ok &= good
        lines.append(f"m={m}: IS {w.mean():.4g} vs fwd {pf:.4g} (se {se:.2g})")
    report("change of measure: tilted likelihood identity at the stated instance", ok,
           "; ".join(lines))
    assert ok


def test_change_of_measure_snrb_in_precondition(report):
    p = RecordParams.make(0.8, 5.0, 0.1)
    path = DyadicPath(0.8, 1, dyadic_fbm(1, 0.8, RngStream(51)))
    top = 14
    r = RngStream(52)
    s_levels = []
    for _ in range(CM_SAMPLES):
        found, out = snrb(path, p, r)
        s_levels.append(out.level if found else 0)
    r2 = RngStream(53)
    f_levels = [forward_tau(path, p, r2, top) or 0 for _ in range(CM_SAMPLES)]
    s_levels, f_levels = np.array(s_levels), np.array(f_levels)
    ok = True
    for lv in sorted(set(s_levels) | set(f_levels)):
        a, b = np.mean(s_levels == lv), np.mean(f_levels == lv)
        se = math.sqrt((a * (1 - a) + b * (1 - b)) / CM_SAMPLES)
        ok &= abs(a - b) <= 3 * se + 1e-15
    acc = float(np.mean(s_levels > 0))
    report("change of measure: SNRB vs forward oracle (H=0.8, rho=5, delta=0.1, n=1)", ok,
           f"SNRB found freq={acc:.2e}, forward freq={np.mean(f_levels > 0):.2e}")
    assert ok


# ------------------------------------------------------------------ 6

def test_euler_convergence(report):
    p = RecordParams.make(0.8, 20.0, 0.04)
    alpha, a = 0.75, 1e-4
    f = linear_field(a)
    levels = list(range(6, 13))
    errs = np.empty((50, len(levels)))
    violations = 0
    for i in range(50):
        r = RngStream(61, i)
        led, path = slrb(p, r)
        C = max(1.0, fbm_holder_certificate(path, led, alpha, p))
        G = euler_constants(f, C, alpha).G
        drv, _ = extend_without_breakers(path, levels[-1], p, r)
        for j, n in enumerate(levels):
            Bn = drv.restrict(n).values
            y = euler_solve(f, Bn[None], [1.0])[:, 0]
            errs[i, j] = np.abs(y - np.exp(a * Bn)).max()
            violations += errs[i, j] > G * 2.0 ** (-n * (2 * alpha - 1))
    order = -np.polyfit(levels, np.log2(errs.mean(axis=0)), 1)[0]
    ok = violations == 0 and order >= 2 * alpha - 1 - 0.3
    report("Euler convergence", ok, f"bound violations={violations}, fitted order={order:.3f}")
    assert violations == 0
    assert order >= 2 * alpha - 1 - 0.3


# ------------------------------------------------------------------ 7

def test_mlmc_correctness_and_cost(report):
    p = RecordParams.make(0.8, 5.0, 0.1)
    spec = FunctionalSpec.builtin("terminal_sq")
    eps_list = [0.2, 0.1, 0.05, 0.025]
    costs, est01 = [], None
    for j, eps in enumerate(eps_list):
        est = estimate(allocate(eps, spec, p), spec, p, RngStream(71, j))
        costs.append(est.total_cost)
        if eps == 0.1:
            est01 = est
    expo = loglog_slope([1 / e for e in eps_list], costs)
    within = abs(est01.value - 1.0) <= 3 * est01.stderr
    ok = within and expo <= 2.4
    report("MLMC correctness and cost scaling", ok,
           f"E[B(1)^2]={est01.value:.4f} +- {est01.stderr:.4f}, cost exponent={expo:.3f}")
    assert within
    assert expo <= 2.4


# ------------------------------------------------------------------ 8

def test_refinement_complexity(report):
    p = RecordParams.make(0.8, 5.0, 0.1)
    rows = refinement_timing(range(14, 20), p, seed=81, repeats=5)
    slope = loglog_slope([r["points"] * r["level"] for r in rows], [r["seconds"] for r in rows])
    ok = 0.9 <= slope <= 1.3
    report("refinement complexity trend", ok, f"slope vs 2^L log 2^L = {slope:.3f}")
    assert 0.9 <= slope <= 1.3
