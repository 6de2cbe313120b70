from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from epsfbm.epsilon_fbm import RecordParams, level_deviations, uniform_error_bound
from epsfbm.errors import DomainError
from epsfbm.gaussian_core import dyadic_fbm
from epsfbm.mlmc import (
    FunctionalSpec,
    allocate,
    bias_bound,
    estimate,
    level_difference,
    variance_bounds,
)
from epsfbm.rng import RngStream
from epsfbm.sde_euler import linear_field

P = RecordParams.make(0.8, 5.0, 0.1)


def test_terminal_difference_vanishes():
    spec = FunctionalSpec.builtin("terminal")
    for k in range(1, 8):
        assert np.all(level_difference(spec, k, P, RngStream(k), size=100) == 0.0)


def test_level_zero_uses_endpoint_segment():
    spec = FunctionalSpec.builtin("sup_abs")
    d = level_difference(spec, 0, P, RngStream(1), size=1000)
    v = dyadic_fbm(0, 0.8, RngStream(1), size=1000)
    assert np.array_equal(d, np.abs(v[:, -1]))


def test_sup_norm_coupling_and_variance():
    spec = FunctionalSpec.builtin("sup_abs")
    V = variance_bounds(spec, 8, P)
    for k in (2, 5, 8):
        d = level_difference(spec, k, P, RngStream(2, k), size=10**4)
        v = dyadic_fbm(k, 0.8, RngStream(2, k), size=10**4)
        dev = level_deviations(v, k, k)[:, 0]
        assert np.all(np.abs(d) <= dev + 1e-15)
        assert d.var() <= V[k]


def test_variance_decay_ratio():
    spec = FunctionalSpec.builtin("sup_abs")
    ks = np.arange(4, 11)
    var = [level_difference(spec, int(k), P, RngStream(3, int(k)), size=4000).var() for k in ks]
    ratio = 2.0 ** np.polyfit(ks, np.log2(var), 1)[0]
    assert ratio <= 2.0 ** (-2 * P.hd) * 1.5


def test_case_two_variance_inequality():
    # driver bound at the scale produced by the certificate for (rho, delta) below
    p = RecordParams.make(0.8, 20.0, 0.04)
    spec = FunctionalSpec.sde(linear_field(1e-4), [1.0], alpha=0.75, C_alpha=6800.0)
    G = spec.G()
    V = variance_bounds(spec, 8, p)
    for k in (3, 6, 8):
        d = level_difference(spec, k, p, RngStream(4, k), size=10**4)
        assert d.var() <= 4 * G * 2.0 ** (-2 * (2 * 0.75 - 1) * k)
        assert d.var() <= V[k]


def test_allocate_example_and_budget():
    spec = FunctionalSpec.builtin("sup_abs")
    plan = allocate(0.05, spec, P)
    K = next(k for k in range(60)
             if 5 * 2 ** (-0.7 * (k + 1)) / (1 - 2**-0.7) <= 0.05 / math.sqrt(2))
    assert plan.K == K
    assert sum(v / r for v, r in zip(plan.V, plan.r)) <= 0.05**2 / 2
    assert bias_bound(spec, plan.K, P) == uniform_error_bound(plan.K, P)


@given(st.floats(1e-3, 1.0))
def test_halving_eps_level_growth(eps):
    spec = FunctionalSpec.builtin("max")
    a, b = allocate(eps, spec, P), allocate(eps / 2, spec, P)
    assert 0 <= b.K - a.K <= math.ceil(1 / P.hd)


def test_allocate_rejects():
    with pytest.raises(DomainError):
        allocate(0.0, FunctionalSpec.builtin("max"), P)
    with pytest.raises(DomainError):
        FunctionalSpec.builtin("nope")
    with pytest.raises(DomainError):
        FunctionalSpec("lipschitz")


def test_terminal_sq_level_zero_variance():
    spec = FunctionalSpec.builtin("terminal_sq")
    assert variance_bounds(spec, 0, P)[0] == 2.0


@pytest.mark.parametrize("name,target", [("terminal_sq", 1.0), ("terminal", 0.0)])
def test_estimate_known_means(name, target):
    spec = FunctionalSpec.builtin(name)
    plan = allocate(0.1, spec, P)
    est = estimate(plan, spec, P, RngStream(5))
    assert abs(est.value - target) <= 3 * est.stderr


def test_estimate_jobs_do_not_change_result():
    spec = FunctionalSpec.builtin("sup_abs")
    plan = allocate(0.2, spec, P)
    a = estimate(plan, spec, P, RngStream(6), jobs=1)
    b = estimate(plan, spec, P, RngStream(6), jobs=2)
    assert a.as_dict() == b.as_dict()


def test_cost_monotone_in_precision():
    spec = FunctionalSpec.builtin("sup_abs")
    costs = [estimate(allocate(e, spec, P), spec, P, RngStream(7)).total_cost
             for e in (0.4, 0.2, 0.1)]
    assert costs[0] < costs[1] < costs[2]


def test_telescoping_matches_naive():
    spec = FunctionalSpec.builtin("sup_abs")
    plan = allocate(0.1, spec, P)
    est = estimate(plan, spec, P, RngStream(8))
    n = 40000
    v = dyadic_fbm(plan.K, 0.8, RngStream(9), size=n)
    naive = np.abs(v).max(axis=1)
    se = math.sqrt(est.stderr**2 + naive.var() / n)
    assert abs(est.value - naive.mean()) <= 3 * se


def test_certified_mode_runs():
    spec = FunctionalSpec.builtin("terminal_sq")
    plan = allocate(0.5, spec, P)
    est = estimate(plan, spec, P, RngStream(10), certified=True)
    assert est.search_cost > 0
    assert abs(est.value - 1.0) <= 3 * est.stderr
