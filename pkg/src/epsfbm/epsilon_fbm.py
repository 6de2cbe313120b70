"""Epsilon-strong simulation of fractional Brownian motion.

A path is built on dyadic grids.  Levels whose midpoint displacement reaches
``rho * 2^{-(H-delta)k}`` are record-breakers; once the last one is located
(by exponential tilting plus acceptance-rejection) the piecewise-linear
interpolant at a fixed truncation level is within a known distance of the
true path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .errors import DomainError, NumericalError
from .gaussian_core import (
    MAX_CIRCULANT_LEVEL,
    bridge_refine,
    check_hurst,
    cholesky_jitter,
    conditional_gaussian,
    dyadic_fbm,
    fbm_cov_matrix,
    GridGaussian,
    refine_dyadic,
    sample_mvn,
)
from .rng import RngStream

BETA = np.array([0.5, -1.0, 0.5])
MAX_BCE_LEVEL = 12          # dense factorization of Sigma_n
LR_TOL = 1e-9
G_TAIL = 1e-15
RETRY_CAP = 10**6


class LikelihoodRatioViolation(NumericalError):
    """The weighted likelihood ratio exceeded one on an accepted proposal."""


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class RecordParams:
    """Record-breaker parameters.

    ``rho = 2 (nu + nustar)``; the breaker threshold at level ``k`` is
    ``rho * ell_k`` with ``ell_k = 2^{-(H-delta)k}``.
    """

    H: float
    delta: float
    rho: float
    nu: float
    nustar: float

    def __post_init__(self):
        check_hurst(self.H)
        for name in ("delta", "rho", "nu", "nustar"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise DomainError(f"{name} must be finite")
        if not (0.0 < self.delta < self.H):
            raise DomainError(f"need 0 < delta < H, got delta={self.delta}, H={self.H}")
        if self.nu <= 0 or self.nustar <= 0:
            raise DomainError("nu and nustar must be positive")
        if abs(self.rho - 2.0 * (self.nu + self.nustar)) > 1e-12 * max(1.0, self.rho):
            raise DomainError("rho must equal 2(nu + nustar)")

    @classmethod
    def make(cls, H: float, rho: float, delta: float, nu: float | None = None,
             nustar: float | None = None) -> "RecordParams":
        """Build from ``rho``; missing ``nu``/``nustar`` split ``rho/2`` evenly."""
        rho = float(rho)
        if rho <= 0:
            raise DomainError("rho must be positive")
        if nu is None and nustar is None:
            nu = nustar = rho / 4.0
        elif nu is None:
            nu = rho / 2.0 - nustar
        elif nustar is None:
            nustar = rho / 2.0 - nu
        return cls(float(H), float(delta), rho, float(nu), float(nustar))

    @property
    def hd(self) -> float:
        return self.H - self.delta

    def ell(self, k) -> float:
        return 2.0 ** (-self.hd * k)

    def threshold(self, k) -> float:
        return self.rho * self.ell(k)

    def as_dict(self) -> dict:
        return {"H": self.H, "delta": self.delta, "rho": self.rho,
                "nu": self.nu, "nustar": self.nustar}


@dataclass(frozen=True)
class DyadicPath:
    """fBM values at ``i/2^level``, read with piecewise-linear interpolation."""

    H: float
    level: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if self.level < 0 or v.shape != (2**self.level + 1,):
            raise DomainError(f"level {self.level} needs {2**self.level + 1} values, got {v.shape}")
        if v[0] != 0.0:
            raise DomainError("values[0] must be 0")

    @property
    def times(self) -> np.ndarray:
        return np.arange(2**self.level + 1) / 2**self.level

    def restrict(self, k: int) -> "DyadicPath":
        if not 0 <= k <= self.level:
            raise DomainError("restriction level out of range")
        return DyadicPath(self.H, k, self.values[:: 2 ** (self.level - k)].copy())

    def __call__(self, t):
        return np.interp(t, self.times, self.values)


@dataclass
class BreakerLedger:
    """Record-breaker levels found so far.

    ``last_breaker`` is ``None`` until a breaker is found (the minus-infinity
    sentinel); ``N`` is the last-breaker level, or the starting level when no
    breaker was found above it.
    """

    start_level: int
    breaker_levels: list = field(default_factory=list)
    finalized: bool = False

    @property
    def last_breaker(self):
        return self.breaker_levels[-1] if self.breaker_levels else None

    @property
    def N(self) -> int:
        lb = self.last_breaker
        return self.start_level if lb is None else max(lb, self.start_level)

    def add(self, level: int) -> None:
        if self.breaker_levels and level <= self.breaker_levels[-1]:
            raise ValueError("breaker levels must increase")
        self.breaker_levels.append(int(level))


@dataclass(frozen=True)
class TiltedProposal:
    """Proposal ``(m, k, sign)`` and the triple ``alpha_n(m,k)`` it drew."""

    m: int
    k: int
    sign: int
    triple: np.ndarray

    @property
    def statistic(self) -> float:
        return float(BETA @ self.triple)


@dataclass(frozen=True)
class EcmResult:
    accepted: bool
    path: DyadicPath
    proposal: TiltedProposal
    log_theta: float
    n_breakers: int
    indicator: bool
    weight: float  # Theta / R * indicator


@dataclass(frozen=True)
class EpsilonCertificate:
    """Path-by-path error certificate."""

    N: int
    N_eps: int
    eps: float
    sup_bound: float
    params: RecordParams
    start_level: int
    K_nu: int
    breaker_levels: tuple = ()
    searched_level: int = 0
    retries: int = 0
    holder: tuple | None = None  # (alpha, bound)
    provenance: dict | None = None

    def as_dict(self) -> dict:
        return {
            "N": self.N, "N_eps": self.N_eps, "eps": self.eps, "sup_bound": self.sup_bound,
            "params": self.params.as_dict(), "start_level": self.start_level,
            "K_nu": self.K_nu, "breaker_levels": list(self.breaker_levels),
            "searched_level": self.searched_level, "retries": self.retries,
            "holder": None if self.holder is None else
            {"alpha": self.holder[0], "bound": self.holder[1]},
            "provenance": self.provenance,
        }


# ------------------------------------------------------------ deviations

def level_deviations(values: np.ndarray, lo: int = 1, hi: int | None = None) -> np.ndarray:
    """Midpoint deviations ``||B_k - B_{k-1}||_inf`` for ``k = lo..hi``.

    ``values`` may carry leading batch axes; the result then has shape
    ``batch + (hi - lo + 1,)``.
    """
    values = np.asarray(values, dtype=np.float64)
    n = (values.shape[-1] - 1).bit_length() - 1
    hi = n if hi is None else hi
    out = np.empty(values.shape[:-1] + (max(hi - lo + 1, 0),))
    for i, k in enumerate(range(lo, hi + 1)):
        v = values[..., :: 2 ** (n - k)]
        d = np.abs(v[..., 1::2] - 0.5 * (v[..., :-2:2] + v[..., 2::2]))
        out[..., i] = d.max(axis=-1)
    return out


def midpoint_deviation(path: DyadicPath, k: int) -> float:
    """Sup distance between the level-k and level-(k-1) interpolants."""
    if not 1 <= k <= path.level:
        raise DomainError(f"level {k} outside 1..{path.level}")
    return float(level_deviations(path.values, k, k)[0])


def is_record_broken(path: DyadicPath, k: int, p: RecordParams) -> bool:
    return midpoint_deviation(path, k) >= p.threshold(k)


def breaker_levels_in(values: np.ndarray, p: RecordParams, lo: int, hi: int) -> list:
    """Levels in ``lo..hi`` whose deviation reaches the threshold."""
    if hi < lo:
        return []
    dev = level_deviations(values, lo, hi)
    ks = np.arange(lo, hi + 1)
    return [int(k) for k in ks[dev >= p.rho * 2.0 ** (-p.hd * ks)]]


# ------------------------------------------------------ level constants

def K_of_nu(nu: float, delta: float) -> int:
    """Largest ``n >= 1`` with ``4 sqrt(n) > nu 2^{delta n}``, or 0."""
    if nu <= 0 or delta <= 0:
        raise DomainError("nu and delta must be positive")
    # sqrt(n)/2^{delta n} increases up to n0 then strictly decreases
    n0 = math.ceil(1.0 / (2.0 * delta * math.log(2.0)))
    last = 0
    n = 1
    while True:
        lhs = math.log(4.0) + 0.5 * math.log(n)
        rhs = math.log(nu) + delta * n * math.log(2.0)
        if lhs > rhs:
            last = n
        elif n > n0:
            return last
        n += 1


def _log_g_terms(n: int, p: RecordParams):
    """Log of the unnormalized terms ``2^{n+m} exp(-rho^2/8 2^{2(n+m)delta})``.

    Returns ``(ms, logs, log_tail)`` where ``log_tail`` bounds the log of the
    neglected remainder.
    """
    ln2 = math.log(2.0)
    c = p.rho**2 / 8.0
    ms, logs = [], []
    m = 1
    while True:
        j = n + m
        lt = j * ln2 - c * 2.0 ** (2 * j * p.delta)
        ms.append(m)
        logs.append(lt)
        if len(logs) >= 2:
            log_ratio = lt - logs[-2]
            peak = max(logs)
            # past the mode the term ratio is decreasing, so the tail is geometric
            if log_ratio < -ln2 and lt < peak + math.log(1e-18):
                log_tail = lt + log_ratio - math.log1p(-math.exp(log_ratio))
                return np.array(ms), np.array(logs), log_tail
        m += 1
        if m > 100000:
            raise NumericalError("g_n series failed to converge")


def log_Z_n(n: int, p: RecordParams) -> float:
    _, logs, log_tail = _log_g_terms(n, p)
    top = max(logs.max(), log_tail)
    return float(top + math.log(np.exp(logs - top).sum() + math.exp(log_tail - top)))


def Z_n(n: int, p: RecordParams) -> float:
    """Normalizing constant of the level-offset proposal at level ``n``."""
    if n < 0:
        raise DomainError("n must be nonnegative")
    return math.exp(log_Z_n(n, p))


def starting_level(p: RecordParams) -> int:
    """Smallest ``n >= 1`` with ``Z_n <= 1``; ``Z_n`` strictly decreases in ``n``."""
    n = 1
    while log_Z_n(n, p) > 0.0:
        n += 1
    return n


def g_weights(n: int, p: RecordParams):
    """Support and probabilities of ``g_n``.

    Terms are kept until the cumulative mass reaches ``1 - 1e-15``; the
    remainder is folded into the last kept term.
    """
    ms, logs, log_tail = _log_g_terms(n, p)
    lz = log_Z_n(n, p)
    probs = np.exp(logs - lz)
    cum = np.cumsum(probs)
    stop = int(np.searchsorted(cum, 1.0 - G_TAIL)) + 1
    stop = min(stop, len(ms))
    ms, probs = ms[:stop].copy(), probs[:stop].copy()
    probs[-1] += max(0.0, 1.0 - probs.sum())
    return ms, probs


def g_prob(n: int, m: int, p: RecordParams) -> float:
    """Exact ``g_n(m)`` (no truncation)."""
    ln2 = math.log(2.0)
    lt = (n + m) * ln2 - p.rho**2 / 8.0 * 2.0 ** (2 * (n + m) * p.delta)
    return math.exp(lt - log_Z_n(n, p))


def sample_g(n: int, p: RecordParams, rng: RngStream) -> int:
    """Draw a level offset ``M ~ g_n`` by inverse CDF."""
    if n < starting_level(p):
        raise DomainError(f"level {n} is below the starting level {starting_level(p)}")
    ms, probs = g_weights(n, p)
    u = rng.uniform()
    i = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return int(ms[min(i, len(ms) - 1)])


def tilt_parameter(n: int, m: int, p: RecordParams) -> float:
    """Upward tilt ``rho/2 * 2^{(n+m)(H+delta)}``; the downward one is its negative."""
    if n < 0 or m < 1:
        raise DomainError("need n >= 0 and m >= 1")
    return p.rho / 2.0 * 2.0 ** ((n + m) * (p.H + p.delta))


# -------------------------------------------------------------- BCE check

@dataclass(frozen=True)
class BceReport:
    passed: bool
    gamma: float
    M: int
    worst_ratio: float  # max |mu| / (rho/2 * ell_{n+m})


def _cond_mean_weights(path: DyadicPath) -> np.ndarray:
    """``Sigma_n^{-1} B_n`` over the nonzero grid times."""
    if path.level > MAX_BCE_LEVEL:
        raise NumericalError(f"dense conditioning at level {path.level} exceeds {MAX_BCE_LEVEL}")
    t = path.times[1:]
    L = cholesky_jitter(fbm_cov_matrix(t, t, path.H))
    y = np.linalg.solve(L, path.values[1:])
    return np.linalg.solve(L.T, y)


def conditional_midpoint_means(path: DyadicPath, m: int, w: np.ndarray | None = None) -> np.ndarray:
    """``beta . E[alpha_n(m,k) | B_n]`` for ``k = 1..2^{n+m-1}``."""
    if w is None:
        w = _cond_mean_weights(path)
    L = path.level + m
    t = np.arange(2**L + 1) / 2**L
    tj = path.times[1:]
    cm = np.empty(t.size)
    step = max(1024, (1 << 22) // max(tj.size, 1))
    for lo in range(0, t.size, step):
        hi = min(lo + step, t.size)
        cm[lo:hi] = fbm_cov_matrix(t[lo:hi], tj, path.H) @ w
    return 0.5 * (cm[:-2:2] + cm[2::2]) - cm[1::2]


def bce_report(path: DyadicPath, p: RecordParams) -> BceReport:
    n = path.level
    w = _cond_mean_weights(path)
    gamma = float(np.abs(w).max()) if w.size else 0.0
    if gamma > 0:
        raw = math.log2((2 ** (n + 1) + 2) * gamma / p.rho) / p.hd - n
        M = max(1, math.ceil(raw))
    else:
        M = 1
    if n + M > MAX_CIRCULANT_LEVEL:
        raise NumericalError(f"BCE check would need level {n + M}")
    worst = 0.0
    for m in range(1, M + 1):
        mu = conditional_midpoint_means(path, m, w)
        bound = p.rho / 2.0 * 2.0 ** (-(n + m) * p.hd)
        worst = max(worst, float(np.abs(mu).max()) / bound)
    return BceReport(worst < 1.0, gamma, M, worst)


def bce_check(path: DyadicPath, p: RecordParams) -> bool:
    """Bounded conditional expectation check at the path's level."""
    return bce_report(path, p).passed


# ------------------------------------------------------ change of measure

def ecm(path: DyadicPath, m: int, p: RecordParams, rng: RngStream,
        enforce_bound: bool = True) -> EcmResult:
    """One exponential change-of-measure proposal for ``tau = n + m``.

    Parameters
    ----------
    enforce_bound : bool
        Raise :class:`LikelihoodRatioViolation` when ``Theta/R`` exceeds one
        on the event that is tested.  Disable only to study the raw weights.
    """
    n = path.level
    L = n + m
    if m < 1:
        raise DomainError("m must be >= 1")
    if L > MAX_CIRCULANT_LEVEL:
        raise NumericalError(f"proposal level {L} exceeds {MAX_CIRCULANT_LEVEL}")
    H = p.H
    k = int(rng.integers(1, 2 ** (L - 1) + 1))
    sign = 1 if rng.uniform() < 0.5 else -1
    theta = sign * tilt_parameter(n, m, p)

    s = 2**m
    idx = np.array([2 * k - 2, 2 * k - 1, 2 * k])
    on_coarse = idx % s == 0
    free = idx[~on_coarse]
    known_t = path.times[1:]
    free_t = free / 2**L
    joint = GridGaussian.fbm(np.concatenate([known_t, free_t]), H)
    cond = conditional_gaussian(joint, np.arange(known_t.size), path.values[1:])
    beta_f = BETA[~on_coarse]
    fixed = float(BETA[on_coarse] @ path.values[idx[on_coarse] // s])
    mu = float(beta_f @ cond.mean) + fixed
    sig_b = cond.cov @ beta_f
    var = float(beta_f @ sig_b)
    tilted = GridGaussian(cond.points, cond.mean + theta * sig_b, cond.cov)
    alpha_f = sample_mvn(tilted, rng)

    out = np.empty(2**L + 1)
    out[::s] = path.values
    out[free] = alpha_f
    fine_t = np.arange(2**L + 1) / 2**L
    known_mask = np.zeros(2**L + 1, dtype=bool)
    known_mask[::s] = True
    known_mask[free] = True
    new = ~known_mask
    out[new] = bridge_refine(fine_t[known_mask], out[known_mask], fine_t[new], H, rng)

    triple = out[idx]
    stat = float(BETA @ triple)
    log_xi = theta * mu + 0.5 * theta**2 * var
    log_theta = -math.log(g_prob(n, m, p)) + L * math.log(2.0) - theta * stat + log_xi
    thr = p.threshold(L)
    top = out[::1]
    d_top = np.abs(top[1::2] - 0.5 * (top[:-2:2] + top[2::2]))
    R = int(np.count_nonzero(d_top >= thr))
    earlier = breaker_levels_in(out, p, n + 1, L - 1)
    indicator = sign * stat >= thr and not earlier
    weight = math.exp(log_theta) / R if indicator else 0.0
    if indicator and enforce_bound and weight > 1.0 + LR_TOL:
        raise LikelihoodRatioViolation(
            f"Theta/R = {weight:.6g} > 1 at n={n}, m={m}, k={k}; BCE or starting level violated")
    accepted = bool(indicator and rng.uniform() < weight)
    prop = TiltedProposal(m, k, sign, triple)
    return EcmResult(accepted, DyadicPath(H, L, out), prop, log_theta, R, bool(indicator), weight)


# -------------------------------------------------------- breaker search

def refine_one_level(path: DyadicPath, rng: RngStream) -> DyadicPath:
    return DyadicPath(path.H, path.level + 1, refine_dyadic(path.values, path.level + 1, path.H, rng))


def snrb(path: DyadicPath, p: RecordParams, rng: RngStream):
    """Search for the next record-breaker above ``path.level``.

    Returns ``(found, path)``.  When ``found`` the returned path carries a
    breaker at its top level; otherwise it is the input path extended by any
    nominal refinements made while waiting for the BCE condition.
    """
    if path.level < starting_level(p):
        raise DomainError("path level is below the starting level")
    while not bce_check(path, p):
        path = refine_one_level(path, rng)
        if is_record_broken(path, path.level, p):
            return True, path
    m = sample_g(path.level, p, rng)
    res = ecm(path, m, p, rng)
    if res.accepted:
        return True, res.path
    return False, path


def slrb(p: RecordParams, rng: RngStream, start: int | None = None):
    """Locate the last record-breaker.

    Returns ``(ledger, path)`` where ``path`` is an exact sample on a dyadic
    grid of level at least ``ledger.N`` with no breaker above ``ledger.N``.
    """
    n0 = starting_level(p) if start is None else int(start)
    if n0 > MAX_BCE_LEVEL:
        raise NumericalError(
            f"starting level {n0} exceeds the supported {MAX_BCE_LEVEL}; increase rho or delta")
    ledger = BreakerLedger(start_level=n0)
    path = DyadicPath(p.H, n0, dyadic_fbm(n0, p.H, rng))
    while True:
        found, path = snrb(path, p, rng)
        if not found:
            break
        ledger.add(path.level)
    ledger.finalized = True
    return ledger, path


# ---------------------------------------------------------- truncation

def truncation_level(eps: float, N: int, p: RecordParams) -> int:
    if not eps > 0:
        raise DomainError("eps must be positive")
    hd = p.hd
    lvl = math.ceil(math.log2(p.rho / (eps * (1.0 - 2.0**-hd))) / hd)
    return max(int(N), lvl)


def uniform_error_bound(n: int, p: RecordParams) -> float:
    if n < 0:
        raise DomainError("n must be nonnegative")
    hd = p.hd
    return p.rho * 2.0 ** (-hd * (n + 1)) / (1.0 - 2.0**-hd)


def holder_error_bound(n: int, alpha: float, p: RecordParams) -> float:
    """Bound on the alpha-Holder norm of ``B - B_n`` for ``n >= N``."""
    if not p.H > 0.5:
        raise DomainError("Holder certificate needs H > 1/2")
    if not 0.5 < alpha < p.H:
        raise DomainError(f"alpha must lie in (1/2, H), got {alpha}")
    e = p.H - alpha - p.delta
    if p.delta >= p.H - alpha:
        if p.delta == p.H - alpha:
            return math.inf
        raise DomainError("delta must lie in (0, H - alpha)")
    den = 1.0 - 2.0**-e
    if den <= 0:
        return math.inf
    return p.rho * 2.0 ** (2.0 - alpha) * 2.0 ** (-e * (n + 1)) / den


def holder_norm_dyadic(path: DyadicPath, alpha: float, backend=None) -> float:
    """Upper bound on the alpha-Holder norm of the piecewise-linear path.

    With ``G`` the largest Holder ratio between breakpoints and ``kappa`` the
    largest slope, any pair of times satisfies
    ``|f(t) - f(s)| <= (G + 2^{1-alpha} kappa Delta^{1-alpha}) |t - s|^alpha``
    by splitting at the nearest breakpoints.  A single segment is exact.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0,1)")
    v = path.values
    dt = 2.0**-path.level
    kappa = float(np.abs(np.diff(v)).max()) / dt if v.size > 1 else 0.0
    seg = kappa * dt ** (1.0 - alpha)
    if path.level == 0:
        return seg
    kb = kernels if backend is None else backend
    G = kb.holder_grid_norm(path.times, v, alpha)
    return float(G + 2.0 ** (1.0 - alpha) * seg)


def fbm_holder_certificate(path: DyadicPath, ledger: BreakerLedger, alpha: float,
                           p: RecordParams) -> float:
    if not ledger.finalized:
        raise DomainError("ledger must be finalized")
    base = path.restrict(ledger.N)
    return holder_norm_dyadic(base, alpha) + holder_error_bound(ledger.N, alpha, p)


# --------------------------------------------------------------- drivers

def extend_without_breakers(path: DyadicPath, target: int, p: RecordParams, rng: RngStream,
                            max_retries: int = RETRY_CAP):
    """Resample ``D_target \\ D_level`` until no level above ``path.level`` breaks."""
    if target <= path.level:
        return path.restrict(target) if target < path.level else path, 0
    if target > MAX_CIRCULANT_LEVEL:
        raise NumericalError(f"truncation level {target} exceeds {MAX_CIRCULANT_LEVEL}")
    for retry in range(max_retries):
        cand = refine_dyadic(path.values, target, p.H, rng)
        if not breaker_levels_in(cand, p, path.level + 1, target):
            return DyadicPath(p.H, target, cand), retry
    raise NumericalError(f"no breaker-free refinement after {max_retries} attempts")


def sfbm(eps: float, p: RecordParams, rng: RngStream):
    """Epsilon-strong fBM sample: ``(path at N_eps, certificate)``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    ledger, base = slrb(p, rng)
    n_eps = truncation_level(eps, ledger.N, p)
    if n_eps > MAX_CIRCULANT_LEVEL:
        raise NumericalError(f"truncation level {n_eps} exceeds {MAX_CIRCULANT_LEVEL}")
    path, retries = extend_without_breakers(base, n_eps, p, rng)
    cert = EpsilonCertificate(
        N=ledger.N, N_eps=n_eps, eps=float(eps), sup_bound=uniform_error_bound(n_eps, p),
        params=p, start_level=ledger.start_level, K_nu=K_of_nu(p.nu, p.delta),
        breaker_levels=tuple(ledger.breaker_levels), searched_level=base.level,
        retries=retries, provenance=rng.provenance())
    return path, cert


def refine_tolerance(path: DyadicPath, cert: EpsilonCertificate, eps_new: float, rng: RngStream):
    """Extend the same realization to a smaller tolerance."""
    if not eps_new > 0:
        raise DomainError("eps must be positive")
    p = cert.params
    if cert.sup_bound <= eps_new:
        return path, cert  # already certified at the new tolerance
    target = truncation_level(eps_new, cert.N, p)
    if target <= path.level:
        return path, cert
    new_path, retries = extend_without_breakers(path, target, p, rng)
    return new_path, replace(cert, N_eps=target, eps=float(eps_new),
                             sup_bound=uniform_error_bound(target, p),
                             retries=cert.retries + retries)


# ------------------------------------------------------- naive oracles

def first_breaker_after(values: np.ndarray, n: int, top: int, p: RecordParams):
    """First level in ``n+1..top`` with a breaker, or ``None``."""
    lv = breaker_levels_in(values, p, n + 1, top)
    return lv[0] if lv else None


def forward_tau(path: DyadicPath, p: RecordParams, rng: RngStream, top: int):
    """Nominal forward simulation of the next breaker level, capped at ``top``."""
    vals = refine_dyadic(path.values, top, p.H, rng)
    return first_breaker_after(vals, path.level, top, p)


def naive_last_breaker(p: RecordParams, rng: RngStream, cap: int, size: int = 1):
    """Last breaker level of exact paths on ``D_cap`` (1 when none).

    Returns ``(levels, hit_cap)``; ``hit_cap`` flags samples breaking at ``cap``.
    """
    out = np.ones(size, dtype=np.int64)
    hit = np.zeros(size, dtype=bool)
    ks = np.arange(1, cap + 1)
    thr = p.rho * 2.0 ** (-p.hd * ks)
    for i in range(size):
        dev = level_deviations(dyadic_fbm(cap, p.H, rng), 1, cap)
        br = ks[dev >= thr]
        if br.size:
            out[i] = br[-1]
            hit[i] = br[-1] == cap
    return out, hit


def attach_holder(path: DyadicPath, cert: EpsilonCertificate, alpha: float) -> EpsilonCertificate:
    """Certificate with the alpha-Holder bound of the sampled path added."""
    p = cert.params
    bound = holder_norm_dyadic(path.restrict(cert.N), alpha) + holder_error_bound(cert.N, alpha, p)
    return replace(cert, holder=(float(alpha), float(bound)))
