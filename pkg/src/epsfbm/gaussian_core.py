"""Exact Gaussian machinery for fractional Brownian motion.

Covariance assembly, dense sampling with jitter repair, Gaussian
conditioning, circulant-embedding sampling on dyadic grids and the
sequential bridge recursion used to refine a path.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_toeplitz
from scipy.sparse.linalg import LinearOperator, cg

from . import kernels
from .errors import DomainError, EmbeddingFailure, IllConditionedCovariance
from .rng import RngStream

MAX_CIRCULANT_LEVEL = 24
DENSE_MAX_POINTS = 2**13
JITTER_REL = 1e-12
JITTER_DOUBLINGS = 3
EIG_TOL = -1e-9
# above this many known points the refinement of a full dyadic grid uses the
# Toeplitz formulation of the same conditional law
RECURSION_MAX_KNOWN = 128
CHUNK = 4096
LEVINSON_MAX = 4096  # larger Toeplitz solves use preconditioned CG
CG_RTOL = 1e-13
CG_MAXITER = 1000


def check_hurst(H: float) -> float:
    H = float(H)
    if not (0.0 < H < 1.0) or not np.isfinite(H):
        raise DomainError(f"Hurst index must lie in (0,1), got {H}")
    return H


def fbm_cov(s: float, t: float, H: float) -> float:
    """Covariance of fBM at times ``s`` and ``t``."""
    H = check_hurst(H)
    if s < 0 or t < 0:
        raise DomainError("times must be nonnegative")
    h2 = 2.0 * H
    return 0.5 * (s**h2 + t**h2 - abs(s - t) ** h2)


def fbm_cov_matrix(s, t, H: float) -> np.ndarray:
    """Covariance block between time arrays ``s`` and ``t``."""
    H = check_hurst(H)
    s = np.asarray(s, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if (s < 0).any() or (t < 0).any():
        raise DomainError("times must be nonnegative")
    h2 = 2.0 * H
    d = np.abs(s[:, None] - t[None, :])
    np.power(d, h2, out=d)
    np.subtract((s**h2)[:, None], d, out=d)
    d += (t**h2)[None, :]
    d *= 0.5
    return d


@dataclass(frozen=True)
class FbmCovariance:
    """Covariance function of fBM with Hurst index ``H``."""

    H: float

    def __post_init__(self):
        check_hurst(self.H)

    def __call__(self, s: float, t: float) -> float:
        return fbm_cov(s, t, self.H)

    def matrix(self, points, other=None) -> np.ndarray:
        return fbm_cov_matrix(points, points if other is None else other, self.H)


@dataclass(frozen=True)
class GridGaussian:
    """Gaussian vector indexed by time points."""

    points: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        mu = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)
        n = pts.shape[0]
        if mu.shape != (n,) or cov.shape != (n, n):
            raise DomainError("mean/cov dimensions do not match the number of points")
        if n and np.max(np.abs(cov - cov.T)) > 1e-10:
            raise DomainError("covariance is not symmetric")
        if n:
            floor = -1e-10 * max(float(np.max(np.diag(cov))), 0.0)
            if np.linalg.eigvalsh(cov).min() < floor - 1e-300:
                raise DomainError("covariance is not positive semidefinite")

    @classmethod
    def fbm(cls, points, H: float) -> "GridGaussian":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.zeros(pts.shape[0]), fbm_cov_matrix(pts, pts, H))

    def __len__(self) -> int:
        return self.points.shape[0]


def cholesky_jitter(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with diagonal jitter repair.

    Tries the plain factorization, then adds ``1e-12*trace`` to the diagonal,
    doubling up to three times before giving up.
    """
    cov = np.asarray(cov, dtype=np.float64)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    tr = float(np.trace(cov))
    jitter = JITTER_REL * (tr if tr > 0 else 1.0)
    eye = np.eye(cov.shape[0])
    for _ in range(JITTER_DOUBLINGS + 1):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise IllConditionedCovariance(
        f"Cholesky failed after jitter {jitter / 2:.3e} on a {cov.shape[0]}x{cov.shape[0]} matrix")


def sample_mvn(g: GridGaussian, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draw from ``N(g.mean, g.cov)``.

    Coordinates with zero variance (such as ``t=0``) are returned at their mean
    and excluded from the factorization.
    """
    n = len(g)
    shape = (n,) if size is None else (size, n)
    out = np.broadcast_to(g.mean, shape).copy()
    diag = np.diag(g.cov) if n else np.zeros(0)
    live = np.flatnonzero(diag > 0)
    if live.size == 0:
        return out
    L = cholesky_jitter(g.cov[np.ix_(live, live)])
    z = rng.normal((live.size,) if size is None else (size, live.size))
    out[..., live] += z @ L.T
    return out


def _solve_psd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    L = cholesky_jitter(a)
    y = np.linalg.solve(L, b)
    return np.linalg.solve(L.T, y)


def conditional_gaussian(joint: GridGaussian, observed_indices, observed_values) -> GridGaussian:
    """Law of the unobserved coordinates given the observed ones.

    Observed coordinates with zero variance (``t=0``) carry no information and
    are dropped before inverting, which plays the role of a generalized inverse.
    """
    obs = np.asarray(observed_indices, dtype=np.int64).ravel()
    vals = np.asarray(observed_values, dtype=np.float64).ravel()
    n = len(joint)
    if obs.size != vals.size:
        raise DomainError("observed indices and values differ in length")
    if obs.size and (len(set(obs.tolist())) != obs.size or obs.min() < 0 or obs.max() >= n):
        raise DomainError("observed indices must be distinct and in range")
    if obs.size == 0:
        return joint
    free = np.setdiff1d(np.arange(n), obs)
    keep = np.diag(joint.cov)[obs] > 0
    obs, vals = obs[keep], vals[keep]
    mu1 = joint.mean[free]
    s11 = joint.cov[np.ix_(free, free)]
    if obs.size == 0:
        return GridGaussian(joint.points[free], mu1, s11)
    s12 = joint.cov[np.ix_(free, obs)]
    s22 = joint.cov[np.ix_(obs, obs)]
    sol = _solve_psd(s22, np.column_stack([vals - joint.mean[obs], s12.T]))
    mean = mu1 + s12 @ sol[:, 0]
    cov = s11 - s12 @ sol[:, 1:]
    cov = 0.5 * (cov + cov.T)
    return GridGaussian(joint.points[free], mean, cov)


# ---------------------------------------------------------------- circulant

def fgn_autocov(n: int, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n."""
    k = np.arange(n + 1, dtype=np.float64)
    h2 = 2.0 * H
    return 0.5 * ((k + 1) ** h2 - 2 * k**h2 + np.abs(k - 1) ** h2)


@lru_cache(maxsize=6)
def _circulant_sqrt_eigs(n: int, H: float) -> np.ndarray:
    g = fgn_autocov(n, H)
    row = np.concatenate([g, g[-2:0:-1]])  # length 2n
    lam = np.fft.rfft(row).real
    if lam.min() < EIG_TOL:
        raise EmbeddingFailure(f"negative circulant eigenvalue {lam.min():.3e} (n={n}, H={H})")
    out = np.sqrt(np.clip(lam, 0.0, None))
    out.setflags(write=False)
    return out


def _level_of(n_points: int) -> int:
    n_points = int(n_points)
    if n_points < 1 or n_points & (n_points - 1):
        raise DomainError(f"n_points must be a power of two, got {n_points}")
    return n_points.bit_length() - 1


def circulant_fbm_grid(n_points: int, H: float, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Exact sample of ``(B(1/n), ..., B(1))`` with ``n = n_points = 2^level``.

    Fractional Gaussian noise is drawn by circulant embedding (real FFT form)
    and cumulated.  ``size`` adds a leading batch axis.
    """
    H = check_hurst(H)
    level = _level_of(n_points)
    if level > MAX_CIRCULANT_LEVEL:
        raise DomainError(f"level {level} exceeds the supported maximum {MAX_CIRCULANT_LEVEL}")
    n = n_points
    try:
        sq = _circulant_sqrt_eigs(n, H)
    except EmbeddingFailure:
        if n > DENSE_MAX_POINTS:
            raise
        pts = np.arange(1, n + 1) / n
        return sample_mvn(GridGaussian.fbm(pts, H), rng, size)
    batch = 1 if size is None else int(size)
    out = np.empty((batch, n))
    scale = float(n) ** (-H)
    # rfft of 2n white normals has independent entries: real N(0,2n) at the
    # ends, complex with N(0,n) parts in between; draw them directly.  Rows
    # are drawn in order, so batching does not change the stream usage.
    edge = np.sqrt(2.0 * n)
    mid = np.sqrt(float(n))
    rows = max(1, (1 << 22) // (2 * n))
    for lo in range(0, batch, rows):
        hi = min(lo + rows, batch)
        a = rng.normal((hi - lo, 2 * n))
        spec = np.empty((hi - lo, n + 1), dtype=np.complex128)
        spec.real = a[:, : n + 1] * mid
        spec.real[:, 0] = a[:, 0] * edge
        spec.real[:, n] = a[:, n] * edge
        spec.imag[:, 0] = 0.0
        spec.imag[:, n] = 0.0
        spec.imag[:, 1:n] = a[:, n + 1:] * mid
        spec *= sq
        x = np.fft.irfft(spec, n=2 * n, axis=-1)[:, :n]
        np.cumsum(x, axis=-1, out=out[lo:hi])
        out[lo:hi] *= scale
    return out[0] if size is None else out


def dyadic_fbm(level: int, H: float, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Exact fBM values on ``D_level`` including the leading zero."""
    body = circulant_fbm_grid(2**int(level), H, rng, size)
    pad = [(0, 0)] * (body.ndim - 1) + [(1, 0)]
    return np.pad(body, pad)


# ---------------------------------------------------------------- bridges

def _is_dyadic_union(times: np.ndarray):
    """Return the level L if ``times`` (sorted, positive) equal D_L without 0."""
    n = times.shape[0]
    if n == 0 or n & (n - 1):
        return None
    level = n.bit_length() - 1
    if np.array_equal(times, np.arange(1, n + 1) / n):
        return level
    return None


def _unconditional(times: np.ndarray, H: float, rng: RngStream) -> np.ndarray:
    """Unconditional fBM draw at sorted distinct positive ``times``."""
    level = _is_dyadic_union(times)
    if level is not None and level <= MAX_CIRCULANT_LEVEL:
        return circulant_fbm_grid(times.shape[0], H, rng)
    if times.shape[0] > DENSE_MAX_POINTS:
        raise DomainError("irregular point sets larger than 2^13 are not supported")
    return sample_mvn(GridGaussian.fbm(times, H), rng)


def _split_known(known_times, known_values):
    kt = np.asarray(known_times, dtype=np.float64).ravel()
    kv = np.asarray(known_values, dtype=np.float64).ravel()
    if kt.shape != kv.shape:
        raise DomainError("known times and values differ in length")
    pos = kt > 0
    if (kt < 0).any():
        raise DomainError("times must be nonnegative")
    return kt[pos], kv[pos]


def _recursion(kt, resid, nt, x_new, H, cnn=None, backend=None):
    kb = kernels if backend is None else backend
    if kt.size == 0:
        return
    u, piv, res = kb.condition_known(fbm_cov_matrix(kt, kt, H), resid)
    chunk = max(CHUNK, (1 << 21) // kt.size)
    for lo in range(0, nt.size, chunk):
        hi = min(lo + chunk, nt.size)
        cnk = np.ascontiguousarray(fbm_cov_matrix(nt[lo:hi], kt, H))
        xs = np.ascontiguousarray(x_new[lo:hi])
        kb.condition_new(cnk, u, piv, res, xs, None if cnn is None else cnn)
        x_new[lo:hi] = xs


def bridge_refine(known_times, known_values, new_times, H: float, rng: RngStream,
                  backend=None) -> np.ndarray:
    """Sample fBM at ``new_times`` given its values at ``known_times``.

    An unconditional draw on the union of both sets is corrected by the
    sequential elimination
    ``X^k_t = X^{k-1}_t - r_{k-1}(t,t_k)/r_{k-1}(t_k,t_k) * (X^{k-1}_{t_k} - y_k)``
    with the matching covariance update ``r_k``.  Cost is
    ``O(n_new K^2 + K^3)`` for ``K`` known points.
    """
    H = check_hurst(H)
    kt, kv = _split_known(known_times, known_values)
    nt = np.asarray(new_times, dtype=np.float64).ravel()
    if (nt < 0).any():
        raise DomainError("times must be nonnegative")
    if np.intersect1d(kt, nt).size:
        raise DomainError("new times must be disjoint from known times")
    zero_new = nt == 0
    ntp = nt[~zero_new]
    union = np.concatenate([kt, ntp])
    order = np.argsort(union, kind="stable")
    draw = np.empty_like(union)
    draw[order] = _unconditional(union[order], H, rng)
    x0k, x0n = draw[: kt.size], draw[kt.size:].copy()
    _recursion(kt, x0k - kv, ntp, x0n, H, backend=backend)
    out = np.zeros(nt.shape[0])
    out[~zero_new] = x0n
    return out


def bridge_moments(known_times, known_values, new_times, H: float, backend=None):
    """Conditional mean and covariance produced by the bridge recursion."""
    H = check_hurst(H)
    kt, kv = _split_known(known_times, known_values)
    nt = np.asarray(new_times, dtype=np.float64).ravel()
    mean = np.zeros(nt.size)
    cov = np.ascontiguousarray(fbm_cov_matrix(nt, nt, H))
    if kt.size == 0:
        return mean, cov
    kb = kernels if backend is None else backend
    u, piv, res = kb.condition_known(fbm_cov_matrix(kt, kt, H), -kv)
    cnk = np.ascontiguousarray(fbm_cov_matrix(nt, kt, H))
    kb.condition_new(cnk, u, piv, res, mean, cov)
    return mean, cov


# ------------------------------------------------------- dyadic refinement

def _toeplitz_matvec(col: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Symmetric Toeplitz matrix (first column ``col``) times ``v`` via FFT."""
    n = v.shape[0]
    row = np.concatenate([col, [0.0], col[-1:0:-1]])
    m = row.shape[0]
    prod = np.fft.irfft(np.fft.rfft(row) * np.fft.rfft(v, n=m), n=m)
    return prod[:n]


def solve_toeplitz_spd(col: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``T x = b`` for a symmetric positive definite Toeplitz ``T``.

    Small systems use Levinson recursion.  Large ones use conjugate gradients
    with FFT matvecs and T. Chan's circulant preconditioner, falling back to
    Levinson if the iteration does not reach ``CG_RTOL``.
    """
    n = b.shape[0]
    if n <= LEVINSON_MAX:
        return solve_toeplitz(col, b)
    j = np.arange(n)
    chan = ((n - j) * col + j * np.concatenate([[0.0], col[:0:-1]])) / n
    lam = np.fft.rfft(chan).real
    if lam.min() <= 0:
        return solve_toeplitz(col, b)
    A = LinearOperator((n, n), matvec=lambda v: _toeplitz_matvec(col, v), dtype=np.float64)
    M = LinearOperator((n, n), matvec=lambda v: np.fft.irfft(np.fft.rfft(v) / lam, n=n),
                       dtype=np.float64)
    x, info = cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=CG_MAXITER, M=M)
    if info != 0:
        return solve_toeplitz(col, b)
    return x


def refine_dyadic(values: np.ndarray, target_level: int, H: float, rng: RngStream,
                  backend=None) -> np.ndarray:
    """Extend a path known on ``D_n`` to ``D_target`` under the exact conditional law.

    Parameters
    ----------
    values : array of length ``2^n + 1``
        Path values on ``D_n`` (``values[0] == 0``).
    target_level : int
        Level of the returned grid, ``>= n``.

    Returns
    -------
    ndarray of length ``2^target + 1``; every ``2^(target-n)``-th entry is the
    input value, bit for bit.
    """
    H = check_hurst(H)
    values = np.asarray(values, dtype=np.float64)
    n = _level_of(values.shape[0] - 1)
    L = int(target_level)
    if L < n:
        raise DomainError("target level below the current level")
    if L == n:
        return values.copy()
    s = 2 ** (L - n)
    out = np.empty(2**L + 1)
    out[::s] = values
    mask = np.ones(2**L + 1, dtype=bool)
    mask[::s] = False
    if 2**n <= RECURSION_MAX_KNOWN:
        # the union of known and new times is D_L: one circulant draw, then
        # the sequential correction at the known times
        fine = dyadic_fbm(L, H, rng)
        fine_t = np.arange(2**L + 1) / 2**L
        x_new = fine[mask]
        _recursion(fine_t[s::s], fine[s::s] - values[1:], fine_t[mask], x_new, H,
                   backend=backend)
        out[mask] = x_new
        return out
    # Toeplitz kriging on increments: same conditional law, O(K^2 + 2^L log 2^L)
    fine = dyadic_fbm(L, H, rng)
    e_star = np.diff(fine)
    c_star = np.diff(fine[::s])
    c = np.diff(values)
    coarse_col = fgn_autocov(2**n - 1, H) * (2.0**-n) ** (2 * H)
    w = solve_toeplitz_spd(coarse_col, c - c_star)
    fine_col = fgn_autocov(2**L - 1, H) * (2.0**-L) ** (2 * H)
    e = e_star + _toeplitz_matvec(fine_col, np.repeat(w, s))
    # accumulate within each coarse block from its known left end
    blocks = np.cumsum(e.reshape(2**n, s), axis=1)[:, :-1] + values[:-1, None]
    out[mask] = blocks.ravel()
    return out
