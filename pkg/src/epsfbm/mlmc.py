"""Multilevel Monte Carlo on the dyadic coupling.

Level ``k`` draws a path on ``D_k`` and evaluates the functional on the
level-k and level-(k-1) restrictions of the same path, so the difference
``D_k`` shrinks with the midpoint displacements.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .epsilon_fbm import RecordParams, extend_without_breakers, slrb, uniform_error_bound
from .errors import DomainError
from .gaussian_core import dyadic_fbm
from .rng import RngStream
from .sde_euler import VectorFieldSpec, euler_constants, euler_solve

CHUNK_POINTS = 1 << 20


# ------------------------------------------------------------ functionals

def _terminal(v):
    return v[..., -1]


def _terminal_sq(v):
    return v[..., -1] ** 2


def _sup_abs(v):
    return np.abs(v).max(axis=-1)


def _maximum(v):
    return v.max(axis=-1)


def _integral(v):
    # exact integral of the piecewise-linear interpolant
    n = v.shape[-1] - 1
    return (v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1])) / n


# name -> (evaluator, Lipschitz constant, level-0 variance override)
BUILTIN = {
    "terminal": (_terminal, 1.0, None),
    "terminal_sq": (_terminal_sq, 1.0, 2.0),  # Var B(1)^2 = 2; not globally Lipschitz
    "sup_abs": (_sup_abs, 1.0, None),
    "max": (_maximum, 1.0, None),
    "integral": (_integral, 1.0, None),
}


@dataclass
class FunctionalSpec:
    """What the estimator averages.

    Case I (``kind='lipschitz'``): ``g`` maps path values ``(..., 2^k+1)`` to
    ``(...)`` and is ``L``-Lipschitz in the sup norm.  Case II
    (``kind='sde'``): the component ``component`` of the Euler solution at
    ``t=1``; ``C_alpha`` is the driver Holder bound used for planning.
    ``var0`` replaces the level-0 variance bound when given.
    """

    kind: str
    g: Callable | None = None
    L: float = 1.0
    name: str = "custom"
    field: VectorFieldSpec | None = None
    y0: np.ndarray | None = None
    component: int = 0
    alpha: float = 0.75
    C_alpha: float = 1.0
    var0: float | None = None

    def __post_init__(self):
        if self.kind == "lipschitz":
            if self.g is None or not self.L > 0:
                raise DomainError("Case I needs an evaluator and L > 0")
        elif self.kind == "sde":
            if self.field is None:
                raise DomainError("Case II needs a vector field")
            if self.y0 is None:
                self.y0 = np.zeros(self.field.d)
            self.y0 = np.asarray(self.y0, dtype=np.float64)
        else:
            raise DomainError(f"unknown functional kind {self.kind!r}")

    @classmethod
    def builtin(cls, name: str) -> "FunctionalSpec":
        if name not in BUILTIN:
            raise DomainError(f"unknown functional {name!r}; choose from {sorted(BUILTIN)}")
        g, L, var0 = BUILTIN[name]
        return cls("lipschitz", g=g, L=L, name=name, var0=var0)

    @classmethod
    def sde(cls, field: VectorFieldSpec, y0, component: int = 0, alpha: float = 0.75,
            C_alpha: float = 1.0) -> "FunctionalSpec":
        return cls("sde", field=field, y0=y0, component=component, alpha=alpha,
                   C_alpha=C_alpha, name="sde_terminal")

    def G(self) -> float:
        return euler_constants(self.field, self.C_alpha, self.alpha).G


@dataclass
class MlmcPlan:
    K: int
    r: list
    eps: float
    V: list
    C2: float
    kind: str

    def as_dict(self) -> dict:
        return {"K": self.K, "r": list(self.r), "eps": self.eps, "V_bound": list(self.V),
                "C2": self.C2, "kind": self.kind}


@dataclass
class MlmcEstimate:
    value: float
    stderr: float
    means: list
    variances: list
    r: list
    costs: list
    total_cost: int
    search_cost: int = 0
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "means": list(self.means),
                "variances": list(self.variances), "r": list(self.r),
                "costs": list(self.costs), "total_cost": self.total_cost,
                "search_cost": self.search_cost}


# --------------------------------------------------------- level samples

def _paths(k: int, p: RecordParams, rng: RngStream, size: int, components: int,
           certified: bool):
    """Exact paths on ``D_k``: array ``(size, components, 2^k + 1)``.

    In certified mode every path comes from the record-breaker search
    followed by breaker-free extension; the second return value counts the
    grid points spent on the search.
    """
    if not certified:
        v = dyadic_fbm(k, p.H, rng, size=size * components)
        return v.reshape(size, components, -1), 0
    out = np.empty((size, components, 2**k + 1))
    spent = 0
    for i in range(size):
        for c in range(components):
            ledger, base = slrb(p, rng)
            spent += 2**base.level + 1
            path, _ = extend_without_breakers(base, k, p, rng)
            out[i, c] = path.values
    return out, spent


def _level_samples(spec: FunctionalSpec, k: int, p: RecordParams, rng: RngStream, size: int,
                   certified: bool = False):
    comps = 1 if spec.kind == "lipschitz" else spec.field.dprime
    B, spent = _paths(k, p, rng, size, comps, certified)
    if spec.kind == "lipschitz":
        fine = spec.g(B[:, 0])
        coarse = spec.g(B[:, 0, ::2]) if k >= 1 else 0.0
    else:
        c = spec.component
        fine = euler_solve(spec.field, B, spec.y0)[:, -1, c]
        coarse = euler_solve(spec.field, B[..., ::2], spec.y0)[:, -1, c] if k >= 1 else 0.0
    cost = size * comps * (2**k + 1)
    return np.asarray(fine - coarse, dtype=np.float64), cost, spent


def level_difference(spec: FunctionalSpec, k: int, p: RecordParams, rng: RngStream,
                     size: int | None = None, certified: bool = False):
    """Coupled differences ``g(B_k) - g(B_{k-1})`` (``g(B_0)`` when ``k = 0``)."""
    if k < 0:
        raise DomainError("level must be nonnegative")
    d, _, _ = _level_samples(spec, k, p, rng, 1 if size is None else size, certified)
    return float(d[0]) if size is None else d


# -------------------------------------------------------------- planning

def variance_bounds(spec: FunctionalSpec, K: int, p: RecordParams) -> list:
    """Per-level variance bounds used for allocation."""
    if spec.kind == "lipschitz":
        c = (2.0 * spec.L * p.rho / (1.0 - 2.0**-p.hd)) ** 2
        v0 = spec.L**2 if spec.var0 is None else float(spec.var0)
        return [v0] + [c * 2.0 ** (-2 * p.hd * k) for k in range(1, K + 1)]
    G = spec.G()
    a = 2 * spec.alpha - 1
    sig = spec.field.sigma(spec.y0)[spec.component]
    v0 = float(np.sum(sig**2)) if spec.var0 is None else float(spec.var0)
    return [v0] + [G**2 * 2.0 ** (-2 * a * k) * (1 + 2.0**a) ** 2 for k in range(1, K + 1)]


def bias_bound(spec: FunctionalSpec, k: int, p: RecordParams) -> float:
    if spec.kind == "lipschitz":
        return spec.L * uniform_error_bound(k, p)
    return spec.G() * 2.0 ** (-(2 * spec.alpha - 1) * k)


def allocate(eps: float, spec: FunctionalSpec, p: RecordParams, max_level: int = 30) -> MlmcPlan:
    """Top level from the bias bound and replications from the variance bounds.

    ``K`` is the smallest level with bias bound ``<= eps/sqrt(2)``;
    ``r_k = ceil(2 (K+1) V_k / eps^2)`` so that ``sum V_k / r_k <= eps^2/2``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    target = eps / math.sqrt(2.0)
    K = next((k for k in range(max_level + 1) if bias_bound(spec, k, p) <= target), None)
    if K is None:
        raise DomainError(f"bias bound above eps/sqrt(2) at every level up to {max_level}")
    V = variance_bounds(spec, K, p)
    r = [max(1, math.ceil(2 * (K + 1) * v / eps**2)) for v in V]
    if spec.kind == "lipschitz" and K >= 1:
        # r_k = C2 Delta_k^{2(H-delta)} eps^{-2} log(1/eps)
        C2 = 2 * (K + 1) * V[1] * 2.0 ** (2 * p.hd) / max(math.log(1 / eps), 1e-300)
    else:
        C2 = math.nan
    return MlmcPlan(K, r, float(eps), V, C2, spec.kind)


# ------------------------------------------------------------- estimator

def _chunk_task(args):
    spec, k, p, seed, stream, path, n, certified = args
    rng = RngStream(seed, stream, path)
    d, cost, spent = _level_samples(spec, k, p, rng, n, certified)
    mean = float(d.mean())
    m2 = float(((d - mean) ** 2).sum())
    return n, mean, m2, cost, spent


def _merge(acc, part):
    n_a, mean_a, m2_a = acc
    n_b, mean_b, m2_b = part
    n = n_a + n_b
    if n == 0:
        return acc
    delta = mean_b - mean_a
    mean = mean_a + delta * n_b / n
    m2 = m2_a + m2_b + delta**2 * n_a * n_b / n
    return n, mean, m2


def estimate(plan: MlmcPlan, spec: FunctionalSpec, p: RecordParams, rng: RngStream,
             jobs: int = 1, certified: bool = False) -> MlmcEstimate:
    """Run the plan; chunk streams are keyed by (level, chunk) so ``jobs`` does not matter."""
    tasks = []
    for k, rk in enumerate(plan.r):
        rows = max(1, CHUNK_POINTS // (2**k + 1))
        if certified or spec.kind == "sde":
            rows = max(1, min(rows, 4096))
        for c, lo in enumerate(range(0, rk, rows)):
            n = min(rows, rk - lo)
            tasks.append((k, (spec, k, p, rng.seed, rng.stream_id, rng.path + (k, c), n, certified)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_chunk_task, [t[1] for t in tasks]))
    else:
        results = [_chunk_task(t[1]) for t in tasks]
    K = plan.K
    acc = [(0, 0.0, 0.0) for _ in range(K + 1)]
    costs = [0] * (K + 1)
    spent = 0
    for (k, _), (n, mean, m2, cost, sp) in zip(tasks, results):
        acc[k] = _merge(acc[k], (n, mean, m2))
        costs[k] += cost
        spent += sp
    means = [a[1] for a in acc]
    variances = [a[2] / (a[0] - 1) if a[0] > 1 else 0.0 for a in acc]
    value = float(sum(means))
    stderr = math.sqrt(sum(v / r for v, r in zip(variances, plan.r)))
    return MlmcEstimate(value, stderr, means, variances, list(plan.r), costs, int(sum(costs)), spent)
