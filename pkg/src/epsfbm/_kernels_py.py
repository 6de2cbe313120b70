"""Pure numpy versions of the hot kernels.

These mirror ``_kernels.pyx`` operation by operation and serve as the
fallback when the compiled extension is unavailable.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateConditioning

PIVOT_FLOOR = 1e-14


def condition_known(ckk: np.ndarray, resid: np.ndarray):
    """Sequentially eliminate the known coordinates.

    Parameters
    ----------
    ckk : (K, K) array
        Covariance among the known times.
    resid : (K,) array
        Unconditional draw minus observed value at the known times.

    Returns
    -------
    U : (K, K) array
        Row ``k`` holds r_{k-1}(t_k, .) for columns > k.
    piv : (K,) array
        Pivots r_{k-1}(t_k, t_k).
    res : (K,) array
        Residuals X^{k-1}(t_k) - y_k.
    """
    c = np.array(ckk, dtype=np.float64, copy=True)
    r = np.array(resid, dtype=np.float64, copy=True)
    kk = c.shape[0]
    piv = np.empty(kk)
    for k in range(kk):
        p = c[k, k]
        if p < PIVOT_FLOOR:
            raise DegenerateConditioning(f"pivot {p:.3e} at known index {k}")
        piv[k] = p
        if k + 1 < kk:
            f = c[k + 1:, k] / p
            r[k + 1:] -= f * r[k]
            c[k + 1:, k + 1:] -= np.outer(f, c[k, k + 1:])
    return c, piv, r


def condition_new(cnk: np.ndarray, u: np.ndarray, piv: np.ndarray, res: np.ndarray,
                  x_new: np.ndarray, cnn: np.ndarray | None = None) -> None:
    """Apply the eliminations to new times, in place on ``x_new``/``cnk``/``cnn``."""
    kk = piv.shape[0]
    for k in range(kk):
        col = cnk[:, k]
        f = col / piv[k]
        x_new -= f * res[k]
        if cnn is not None:
            cnn -= np.outer(f, col)
        if k + 1 < kk:
            cnk[:, k + 1:] -= np.outer(f, u[k, k + 1:])


def holder_grid_norm(t: np.ndarray, v: np.ndarray, alpha: float) -> float:
    """max over i<j of |v_j - v_i| / (t_j - t_i)^alpha."""
    t = np.asarray(t, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = t.shape[0]
    best = 0.0
    for i in range(n - 1):
        d = np.abs(v[i + 1:] - v[i]) / (t[i + 1:] - t[i]) ** alpha
        m = d.max()
        if m > best:
            best = m
    return float(best)
