from __future__ import annotations

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from epsfbm import kernels
from epsfbm.errors import DegenerateConditioning
from epsfbm.gaussian_core import fbm_cov_matrix
from epsfbm.rng import RngStream, as_stream

BACKENDS = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])


def test_stream_determinism_and_independence():
    a = RngStream(3, 1).normal(1000)
    assert np.array_equal(a, RngStream(3, 1).normal(1000))
    b = RngStream(3, 2).normal(1000)
    c = RngStream(3, 1).child(0).normal(1000)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15
    assert stats.kstest(np.concatenate([a, b, c]), "norm").pvalue > 0.001


def test_stream_validation_and_provenance():
    with pytest.raises(ValueError):
        RngStream(-1)
    r = RngStream(5, 7).child(2)
    assert r.provenance() == {"seed": 5, "stream_id": 7, "path": [2]}
    assert as_stream(r) is r and as_stream(4).seed == 4


def test_backend_selected_at_import():
    env = dict(os.environ, EPSFBM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from epsfbm import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in ("compiled", "python")
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def _case(seed, nk, nn, H):
    rng = np.random.default_rng(seed)
    pts = rng.permutation(np.arange(1, 65) / 64)[: nk + nn]
    kt, nt = pts[:nk], pts[nk:]
    return (fbm_cov_matrix(kt, kt, H), fbm_cov_matrix(nt, kt, H), fbm_cov_matrix(nt, nt, H),
            rng.standard_normal(nk), rng.standard_normal(nn))


@given(st.integers(0, 10**6), st.integers(1, 20), st.integers(1, 30), st.floats(0.1, 0.9))
def test_condition_backends_agree(seed, nk, nn, H):
    ckk, cnk, cnn, resid, x = _case(seed, nk, nn, H)
    outs = []
    for name in BACKENDS:
        kb = kernels.get_backend(name)
        u, piv, res = kb.condition_known(ckk, resid)
        xn, cn = x.copy(), cnn.copy()
        kb.condition_new(np.array(cnk), u, piv, res, xn, cn)
        outs.append((xn, cn))
    for xn, cn in outs[1:]:
        assert np.allclose(xn, outs[0][0], atol=1e-10, rtol=1e-10)
        assert np.allclose(cn, outs[0][1], atol=1e-10, rtol=1e-10)


@pytest.mark.parametrize("name", BACKENDS)
def test_condition_matches_dense(name):
    kb = kernels.get_backend(name)
    ckk, cnk, cnn, resid, x = _case(1, 6, 9, 0.7)
    u, piv, res = kb.condition_known(ckk, resid)
    xn, cn = x.copy(), cnn.copy()
    kb.condition_new(np.array(cnk), u, piv, res, xn, cn)
    sol = np.linalg.solve(ckk, resid)
    assert np.allclose(xn, x - cnk @ sol, atol=1e-9)
    assert np.allclose(cn, cnn - cnk @ np.linalg.solve(ckk, cnk.T), atol=1e-9)


@pytest.mark.parametrize("name", BACKENDS)
def test_condition_degenerate(name):
    kb = kernels.get_backend(name)
    with pytest.raises(DegenerateConditioning):
        kb.condition_known(np.ones((2, 2)), np.array([1.0, 2.0]))


@given(st.integers(0, 10**6), st.integers(2, 200), st.floats(0.05, 0.99))
def test_holder_grid_norm_backends_agree(seed, n, alpha):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 1, n))
    t[1:] += np.arange(1, n) * 1e-9  # strictly increasing
    v = np.cumsum(rng.standard_normal(n))
    vals = [kernels.get_backend(b).holder_grid_norm(t, v, alpha) for b in BACKENDS]
    brute = max(abs(v[j] - v[i]) / (t[j] - t[i]) ** alpha for i in range(n) for j in range(i + 1, n))
    for x in vals:
        assert x == pytest.approx(brute, rel=1e-12)
