# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_kernels_py`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, pow

from .errors import DegenerateConditioning

cnp.import_array()

cdef double PIVOT_FLOOR = 1e-14


def condition_known(ckk, resid):
    cdef cnp.ndarray[double, ndim=2] c_arr = np.array(ckk, dtype=np.float64, order="C", copy=True)
    cdef cnp.ndarray[double, ndim=1] r_arr = np.array(resid, dtype=np.float64, copy=True)
    cdef double[:, ::1] c = c_arr
    cdef double[::1] r = r_arr
    cdef Py_ssize_t kk = c.shape[0]
    cdef cnp.ndarray[double, ndim=1] piv_arr = np.empty(kk)
    cdef double[::1] piv = piv_arr
    cdef Py_ssize_t k, j, l
    cdef double p, f, rk
    for k in range(kk):
        p = c[k, k]
        if p < PIVOT_FLOOR:
            raise DegenerateConditioning(f"pivot {p:.3e} at known index {k}")
        piv[k] = p
        rk = r[k]
        for j in range(k + 1, kk):
            f = c[j, k] / p
            r[j] -= f * rk
            for l in range(k + 1, kk):
                c[j, l] -= f * c[k, l]
    return c_arr, piv_arr, r_arr


def condition_new(double[:, ::1] cnk, double[:, ::1] u, double[::1] piv, double[::1] res,
                  double[::1] x_new, cnn=None):
    cdef Py_ssize_t m = cnk.shape[0]
    cdef Py_ssize_t kk = piv.shape[0]
    cdef Py_ssize_t i, j, k, l
    cdef double f, pk, rk, ci
    cdef double[:, ::1] cv
    cdef bint has_cnn = cnn is not None
    if has_cnn:
        cv = cnn
    for i in range(m):
        for k in range(kk):
            ci = cnk[i, k]
            f = ci / piv[k]
            x_new[i] -= f * res[k]
            for l in range(k + 1, kk):
                cnk[i, l] -= f * u[k, l]
    if has_cnn:
        # second pass needs the per-step columns, so redo the elimination on a copy
        _cov_update(cnk, u, piv, cv)


cdef void _cov_update(double[:, ::1] cnk_final, double[:, ::1] u, double[::1] piv,
                      double[:, ::1] cnn) nogil:
    # cnk_final[:, k] already holds r_{k-1}(t, t_k) for every k after the pass above
    cdef Py_ssize_t m = cnk_final.shape[0]
    cdef Py_ssize_t kk = piv.shape[0]
    cdef Py_ssize_t a, b, k
    cdef double s
    for a in range(m):
        for b in range(m):
            s = 0.0
            for k in range(kk):
                s += cnk_final[a, k] * cnk_final[b, k] / piv[k]
            cnn[a, b] -= s


def holder_grid_norm(t, v, double alpha):
    cdef double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = tt.shape[0]
    cdef Py_ssize_t i, j
    cdef double best = 0.0, d, gap
    cdef double vmin, vmax, span, gmax = INFINITY
    if n < 2:
        return 0.0
    vmin = vmax = vv[0]
    for i in range(n):
        if vv[i] < vmin:
            vmin = vv[i]
        if vv[i] > vmax:
            vmax = vv[i]
    span = vmax - vmin
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                gap = tt[j] - tt[i]
                # no pair this far apart can beat best: span / gap^alpha <= best
                if gap >= gmax:
                    break
                d = fabs(vv[j] - vv[i]) / pow(gap, alpha)
                if d > best:
                    best = d
                    gmax = pow(span / best, 1.0 / alpha)
    return best
