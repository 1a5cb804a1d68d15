"""Compiled and pure-numpy kernels must agree exactly."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra.numpy import arrays

from histvar import _kernels as K

pytestmark = pytest.mark.skipif(K.NB is None, reason="numba unavailable")

floats = st.floats(-10, 10, allow_nan=False, width=64)


@given(arrays(np.float64, st.integers(12, 80), elements=floats), st.integers(1, 5))
def test_trim_ratio_agrees(d, n_remove):
    # all-equal input is rejected upstream by sd_trim_ratio
    kept = np.sort(np.abs(d))[: len(d) - n_remove]
    assume(np.ptp(d) > 1e-6 and np.ptp(kept) > 1e-6)
    a = K.PY.trim_ratio(d, n_remove)
    b = K.NB.trim_ratio(d, n_remove)
    if np.isinf(a) or np.isinf(b):
        assert np.isinf(a) and np.isinf(b)
    else:
        assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("n_remove", [1, 2, 3, 4, 5])
def test_trim_ratio_ties_at_cut(n_remove):
    # opposite-sign ties at the cut: which one is kept changes the answer
    d = np.array([0.3, -2.0, 0.1, 2.0, -0.2, 2.0, -2.0, 0.4, -0.1, 0.25, 0.05, -0.3])
    a = K.PY.trim_ratio(d, n_remove)
    b = K.NB.trim_ratio(d, n_remove)
    assert a == pytest.approx(b, rel=1e-12)


def test_trim_ratios_matrix_agrees(rng):
    mat = rng.standard_normal((50, 300))
    assert np.allclose(K.PY.trim_ratios(mat, 9), K.NB.trim_ratios(mat, 9), rtol=1e-12, atol=0)


@given(arrays(np.float64, st.integers(3, 60), elements=floats), st.floats(0, 5))
def test_outlier_pass_agrees(x, q):
    a, b = x.copy(), x.copy()
    ma, mb = np.zeros(len(x), bool), np.zeros(len(x), bool)
    ca = K.PY.outlier_pass(a, q, 0.1, ma)
    cb = K.NB.outlier_pass(b, q, 0.1, mb)
    assert ca == cb
    assert np.array_equal(a, b) and np.array_equal(ma, mb)


@given(arrays(np.float64, st.integers(3, 60), elements=st.sampled_from([1.0, 1.05, 2.0, 3.0])),
       st.integers(1, 5))
def test_spike_pass_agrees(x, w):
    a, b = x.copy(), x.copy()
    ma, mb = np.zeros(len(x), bool), np.zeros(len(x), bool)
    assert K.PY.spike_pass(a, w, 0.1, 1e-4, ma) == K.NB.spike_pass(b, w, 0.1, 1e-4, mb)
    assert np.array_equal(a, b) and np.array_equal(ma, mb)


@given(arrays(np.bool_, st.tuples(st.integers(1, 40), st.integers(1, 6))), st.integers(1, 12))
def test_trailing_counts_agrees(m, span):
    assert np.array_equal(K.PY.trailing_counts(m, span), K.NB.trailing_counts(m, span))


@given(arrays(np.bool_, st.tuples(st.integers(1, 40), st.integers(1, 6))))
def test_ever_before_agrees(p):
    assert np.array_equal(K.PY.ever_before(p), K.NB.ever_before(p))


def test_env_flag_selects_numpy_path():
    code = "from histvar import _kernels as K; print(K.ACTIVE is K.PY)"
    env = dict(os.environ, HISTVAR_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "True"
