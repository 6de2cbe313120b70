"""Euler scheme for fBM-driven SDEs with an explicit strong error constant.

For ``H > 1/2`` the equation ``dy = mu(y) dt + sigma(y) dB`` is a Young
equation driven by ``x = [t; B]``.  Given an alpha-Holder bound ``C_alpha`` on
the driver, :func:`euler_constants` produces ``G`` with
``sup |y_n - y| <= G * Delta_n^{2 alpha - 1}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from .epsilon_fbm import (
    DyadicPath,
    RecordParams,
    extend_without_breakers,
    fbm_holder_certificate,
    slrb,
)
from .errors import DomainError, NumericalError
from .gaussian_core import MAX_CIRCULANT_LEVEL
from .rng import RngStream

EXPLICIT_RECURSION_MAX = 10**6
MAX_SDE_LEVEL = 22


# ------------------------------------------------------------ fields

def _poly_eval(terms, y: np.ndarray) -> np.ndarray:
    """Evaluate ``sum coef * prod y_l^{p_l}`` over the last axis of ``y``."""
    out = np.zeros(y.shape[:-1])
    for coef, powers in terms:
        mono = np.full(y.shape[:-1], float(coef))
        for l, pw in enumerate(powers):
            if pw:
                mono = mono * y[..., l] ** int(pw)
        out = out + mono
    return out


@dataclass
class VectorFieldSpec:
    """Drift and diffusion with global bounds on ``f = [mu | sigma]``.

    Parameters
    ----------
    d, dprime : int
        State and driving-noise dimensions.
    mu : callable
        ``(..., d) -> (..., d)``.
    sigma : callable
        ``(..., d) -> (..., d, dprime)``.
    F, DF, D2F : float
        Bounds on the largest entry of ``f``, its gradient and its Hessian.
    radius : float
        Half-width of the box on which the bounds are asserted (spot checks).
    """

    d: int
    dprime: int
    mu: Callable
    sigma: Callable
    F: float
    DF: float
    D2F: float
    radius: float = 10.0
    source: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.dprime < 1:
            raise DomainError("dimensions must be positive")
        for name in ("F", "DF", "D2F"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise DomainError(f"bound {name} must be finite and nonnegative")

    def __reduce__(self):
        # closures do not pickle; rebuild declarative fields from their source
        if self.source is None:
            raise TypeError("only fields built from a declarative spec can be pickled")
        return (VectorFieldSpec.from_dict, (self.source,))

    @property
    def h(self) -> int:
        return self.dprime + 1

    def f(self, y: np.ndarray) -> np.ndarray:
        """Stacked field ``(..., d, h)``: column 0 is the drift."""
        y = np.asarray(y, dtype=np.float64)
        return np.concatenate([self.mu(y)[..., None], self.sigma(y)], axis=-1)

    def spot_check(self, rng: RngStream, n: int = 1000, h: float = 1e-5) -> None:
        """Randomized check of the three bounds on the box; raises on violation."""
        y = (2.0 * rng.uniform((n, self.d)) - 1.0) * self.radius
        fy = self.f(y)
        if np.abs(fy).max() > self.F * (1 + 1e-9) + 1e-12:
            raise DomainError(f"|f| reaches {np.abs(fy).max():.6g} > F={self.F}")
        grads = []
        for l in range(self.d):
            e = np.zeros(self.d)
            e[l] = h
            grads.append((self.f(y + e) - self.f(y - e)) / (2 * h))
        gmax = np.abs(np.stack(grads, axis=-1)).max()
        if gmax > self.DF * (1 + 1e-3) + 1e-9:
            raise DomainError(f"finite-difference |grad f| reaches {gmax:.6g} > DF={self.DF}")

    @classmethod
    def from_dict(cls, spec: dict) -> "VectorFieldSpec":
        """Build a polynomial field from its declarative description.

        ``drift`` is a list of ``d`` term lists, ``diffusion`` a ``d x dprime``
        nested list of term lists; each term is ``[coef, [p_1, ..., p_d]]``.
        """
        try:
            d = int(spec["dimension"])
            dp = int(spec.get("noise_dimension", 1))
            drift = spec["drift"]
            diff = spec["diffusion"]
            b = spec["bounds"]
            F, DF, D2F = float(b["f"]), float(b["grad_f"]), float(b["hess_f"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed field spec: {exc}") from exc
        if len(drift) != d or len(diff) != d or any(len(row) != dp for row in diff):
            raise DomainError("field spec tables do not match the dimensions")
        for terms in list(drift) + [t for row in diff for t in row]:
            for term in terms:
                if len(term) != 2 or len(term[1]) != d:
                    raise DomainError("each term must be [coef, [d powers]]")

        def mu(y):
            y = np.asarray(y, dtype=np.float64)
            return np.stack([_poly_eval(drift[i], y) for i in range(d)], axis=-1)

        def sigma(y):
            y = np.asarray(y, dtype=np.float64)
            rows = [np.stack([_poly_eval(diff[i][j], y) for j in range(dp)], axis=-1)
                    for i in range(d)]
            return np.stack(rows, axis=-2)

        return cls(d, dp, mu, sigma, F, DF, D2F, float(spec.get("radius", 10.0)), spec)

    @classmethod
    def load(cls, path) -> "VectorFieldSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def linear_field(a: float, b: float = 0.0, radius: float = 10.0) -> VectorFieldSpec:
    """Scalar field ``mu(y) = b y``, ``sigma(y) = a y`` with bounds on ``|y| <= radius``."""
    spec = {
        "dimension": 1, "noise_dimension": 1,
        "drift": [[[b, [1]]]] if b else [[]],
        "diffusion": [[[[a, [1]]]]],
        "bounds": {"f": max(abs(a), abs(b)) * radius, "grad_f": max(abs(a), abs(b)), "hess_f": 0.0},
        "radius": radius,
    }
    return VectorFieldSpec.from_dict(spec)


# ------------------------------------------------------------- Euler

def euler_solve(field: VectorFieldSpec, drivers, y0) -> np.ndarray:
    """Euler iterates on the common dyadic grid of the drivers.

    Parameters
    ----------
    drivers : sequence of DyadicPath, or array ``(..., dprime, 2^n + 1)``
    y0 : array ``(d,)`` or ``(..., d)``

    Returns
    -------
    ndarray ``(..., 2^n + 1, d)``.
    """
    if isinstance(drivers, (list, tuple)) and drivers and isinstance(drivers[0], DyadicPath):
        levels = {p.level for p in drivers}
        if len(levels) != 1:
            raise DomainError("drivers must share one level")
        B = np.stack([p.values for p in drivers])
    else:
        B = np.asarray(drivers, dtype=np.float64)
    if B.shape[-2] != field.dprime:
        raise DomainError(f"expected {field.dprime} driver components, got {B.shape[-2]}")
    npts = B.shape[-1]
    n = (npts - 1).bit_length() - 1
    if 2**n + 1 != npts:
        raise DomainError("driver length must be 2^n + 1")
    dt = 2.0**-n
    dB = np.diff(B, axis=-1)  # (..., dprime, 2^n)
    batch = B.shape[:-2]
    y = np.broadcast_to(np.asarray(y0, dtype=np.float64), batch + (field.d,)).copy()
    out = np.empty(batch + (npts, field.d))
    out[..., 0, :] = y
    for k in range(npts - 1):
        y = y + field.mu(y) * dt + np.einsum("...ij,...j->...i", field.sigma(y), dB[..., k])
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"non-finite Euler state at step {k + 1}")
        out[..., k + 1, :] = y
    return out


# --------------------------------------------------------- constants

def K_series(s: float) -> float:
    """``K(s) = 1 + sum_{n>=1} n^{-s}`` for ``s > 1``."""
    if not s > 1:
        raise DomainError("series needs exponent > 1")
    return 1.0 + float(zeta(s, 1))


@dataclass(frozen=True)
class EulerConstants:
    C_alpha: float
    alpha: float
    K2a: float
    G1s: float
    G2s: float
    L: float
    omega: float
    G1: float
    G2: float
    zeta: float
    upsilon: float
    k_star: int
    Gamma: np.ndarray | None
    Upsilon: np.ndarray | None
    Upsilon_kstar: float
    G: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        keys = ("C_alpha", "alpha", "K2a", "G1s", "G2s", "L", "omega", "G1", "G2",
                "zeta", "upsilon", "k_star", "Upsilon_kstar", "G", "degenerate")
        return {k: getattr(self, k) for k in keys}


def euler_constants(field: VectorFieldSpec, C_alpha: float, alpha: float) -> EulerConstants:
    """Constants of the strong error bound for the Euler scheme."""
    if not 0.5 < alpha < 1:
        raise DomainError("alpha must lie in (1/2, 1)")
    if not C_alpha > 0:
        raise DomainError("C_alpha must be positive")
    d, h = field.d, field.h
    F, DF, D2F = field.F, field.DF, field.D2F
    C = float(C_alpha)
    K = K_series(2 * alpha)
    # the covering argument needs at least one interval
    cover = max(1, math.ceil((2 * d * h * C * K * DF) ** (1 / alpha)))
    G1s = 2 * h * cover ** (1 - alpha) * F * C
    if F == 0 or DF == 0:
        nan = math.nan
        return EulerConstants(C, alpha, K, G1s, 0.0, nan, nan, nan, nan, nan, nan, 0,
                              None, None, 0.0, G1s, degenerate=True)
    G2s = d * h * K * DF * C * G1s
    Lc = 4.0 / (1.0 - 2.0 ** (1 - 2 * alpha)) * (h * C) ** 2 * DF * F
    hfc = h * F * C
    omega = (hfc / Lc) ** (1 / alpha)
    G1 = (Lc + hfc) * (1 + 1 / omega)
    G2 = max((2 * omega**-alpha + omega ** (-1 - alpha)) * (Lc + hfc), Lc)
    zt = h * K * C * (d * DF + d * d * D2F * (G1s + G1))
    ups = C * (d * d * h * K * D2F * (G1s + G1) + d * DF)
    k_star = math.ceil((4 * zt) ** (1 / alpha))
    # Upsilon_k = c + q Upsilon_{k-1}, Upsilon_0 = 0
    c = G2s / (2 * zt)
    q = 1 + ups / (2 * zt)
    if k_star <= EXPLICIT_RECURSION_MAX:
        Gam = np.empty(k_star)
        Ups = np.empty(k_star)
        Gam[0] = 2 * G2s
        Ups[0] = Gam[0] / (4 * zt)
        for k in range(1, k_star):
            Gam[k] = 2 * (G2s + ups * Ups[k - 1])
            Ups[k] = Gam[k] / (4 * zt) + Ups[k - 1]
        U = float(Ups[-1])
    else:
        Gam = Ups = None
        if q == 1.0:
            U = c * k_star
        else:
            logU = math.log(c) + k_star * math.log(q) + math.log1p(-q ** (-k_star)) - math.log(q - 1)
            U = math.exp(logU) if logU < 700 else math.inf
    return EulerConstants(C, alpha, K, G1s, G2s, Lc, omega, G1, G2, zt, ups, k_star,
                          Gam, Ups, U, U + G1s)


def sde_level(G: float, eps: float, alpha: float) -> int:
    """Smallest level with ``G * 2^{-n(2 alpha - 1)} <= eps``."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    if not math.isfinite(G):
        raise NumericalError("error constant G is not finite")
    if G <= eps:
        return 0
    return max(0, math.ceil(math.log2(G / eps) / (2 * alpha - 1)))


# ---------------------------------------------------------------- SSDE

@dataclass
class SdeResult:
    values: np.ndarray         # (2^N_Y + 1, d)
    level: int
    eps: float
    constants: EulerConstants
    drivers: list
    certificates: list         # per component: dict(N, holder bound, ...)

    @property
    def times(self) -> np.ndarray:
        return np.arange(2**self.level + 1) / 2**self.level


def ssde(eps: float, field: VectorFieldSpec, p: RecordParams, alpha: float, rng: RngStream,
         y0=None, max_level: int = MAX_SDE_LEVEL) -> SdeResult:
    """Epsilon-strong solution of the SDE on ``[0, 1]``."""
    if not p.H > 0.5:
        raise DomainError("SDE solver needs H > 1/2")
    if not 0.5 < alpha < p.H:
        raise DomainError(f"alpha must lie in (1/2, H), got {alpha}")
    if not 0 < p.delta < p.H - alpha:
        raise DomainError("delta must lie in (0, H - alpha)")
    if not eps > 0:
        raise DomainError("eps must be positive")
    y0 = np.zeros(field.d) if y0 is None else np.asarray(y0, dtype=np.float64)
    if y0.shape != (field.d,):
        raise DomainError("y0 has the wrong dimension")
    runs = []
    for i in range(field.dprime):
        sub = rng.child(i)
        ledger, path = slrb(p, sub)
        runs.append((ledger, path, sub, fbm_holder_certificate(path, ledger, alpha, p)))
    C_alpha = max(1.0, max(r[3] for r in runs))
    consts = euler_constants(field, C_alpha, alpha)
    n_y = sde_level(consts.G, eps, alpha)
    if n_y > min(max_level, MAX_CIRCULANT_LEVEL):
        raise NumericalError(f"required Euler level {n_y} exceeds the maximum {max_level}")
    drivers, certs = [], []
    for ledger, path, sub, hb in runs:
        drv, retries = extend_without_breakers(path, n_y, p, sub)
        drivers.append(drv)
        certs.append({"N": ledger.N, "start_level": ledger.start_level,
                      "breaker_levels": list(ledger.breaker_levels), "holder_bound": hb,
                      "retries": retries, "provenance": sub.provenance()})
    values = euler_solve(field, drivers, y0)
    return SdeResult(values, n_y, float(eps), consts, drivers, certs)
