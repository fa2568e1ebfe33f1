"""Compiled kernels against their pure-numpy originals.

Within one process only one path executes (chosen at import from the
CTS_NO_NUMBA environment variable), so these tests compare the active
path against the ``_py`` originals directly. The CTC recursion uses only
scalar ops and must agree bit for bit; the GRU kernels go through matrix
products whose summation order the JIT may change, so they get a tight
allclose instead.
"""

import numpy as np
import pytest

from ctsum import _kernels
from ctsum._kernels import (
    USE_NUMBA,
    ctc_forward_ll,
    ctc_forward_ll_py,
    gru_backward,
    gru_backward_py,
    gru_forward,
    gru_forward_py,
)
from ctsum.ctc import _expanded_target


def random_ctc_instance(seed, t=12, v=6, l=4):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(v), size=t)
    log_probs = np.ascontiguousarray(np.log(probs))
    target = rng.integers(1, v, size=l)  # repeats allowed
    ext = _expanded_target(np.asarray(target, dtype=np.int64), 0)
    return log_probs, ext


def random_gru_instance(seed, t=7, din=5, h=4):
    rng = np.random.default_rng(seed)
    x = np.ascontiguousarray(rng.standard_normal((t, din)))
    w = np.ascontiguousarray(rng.standard_normal((3 * h, din)) * 0.4)
    u = np.ascontiguousarray(rng.standard_normal((3 * h, h)) * 0.4)
    b = np.ascontiguousarray(rng.standard_normal(3 * h) * 0.1)
    return x, w, u, b


class TestFlag:
    def test_flag_is_consistent_with_bindings(self):
        if USE_NUMBA:
            assert ctc_forward_ll is not ctc_forward_ll_py
            assert hasattr(ctc_forward_ll, "py_func")
        else:
            assert ctc_forward_ll is ctc_forward_ll_py
            assert gru_forward is gru_forward_py
            assert gru_backward is gru_backward_py

    def test_numba_available(self):
        assert _kernels.HAVE_NUMBA


class TestCtcKernel:
    def test_bit_identical_to_python(self):
        for seed in range(30):
            log_probs, ext = random_ctc_instance(seed)
            assert ctc_forward_ll(log_probs, ext) == ctc_forward_ll_py(log_probs, ext)

    def test_single_frame_single_state(self):
        log_probs = np.log(np.array([[0.25, 0.75]]))
        ext = np.array([0], dtype=np.int64)
        assert ctc_forward_ll(log_probs, ext) == pytest.approx(np.log(0.25))

    def test_infeasible_returns_neg_inf(self):
        log_probs, _ = random_ctc_instance(0, t=2)
        ext = _expanded_target(np.array([1, 2, 3], dtype=np.int64), 0)
        assert ctc_forward_ll(log_probs, ext) == -np.inf


class TestGruKernels:
    def test_forward_close_to_python(self):
        for seed in range(10):
            args = random_gru_instance(seed)
            for a, b in zip(gru_forward(*args), gru_forward_py(*args)):
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_backward_close_to_python(self):
        for seed in range(10):
            x, w, u, b = random_gru_instance(seed)
            h, z, r, n, vn = gru_forward_py(x, w, u, b)
            dh = np.ascontiguousarray(np.random.default_rng(seed + 100).standard_normal(h.shape))
            jit_out = gru_backward(x, h, z, r, n, vn, w, u, dh)
            py_out = gru_backward_py(x, h, z, r, n, vn, w, u, dh)
            for a, bb in zip(jit_out, py_out):
                np.testing.assert_allclose(a, bb, rtol=1e-10, atol=1e-12)

    def test_backward_grad_matches_finite_differences(self):
        x, w, u, b = random_gru_instance(3, t=4, din=3, h=2)

        def loss(wv):
            h, *_ = gru_forward_py(x, wv, u, b)
            return h.sum()

        h, z, r, n, vn = gru_forward_py(x, w, u, b)
        dw, _, _, _ = gru_backward_py(x, h, z, r, n, vn, w, u, np.ones_like(h))
        step = 1e-6
        for idx in [(0, 0), (3, 2), (5, 1)]:
            wp = w.copy()
            wp[idx] += step
            wm = w.copy()
            wm[idx] -= step
            fd = (loss(wp) - loss(wm)) / (2 * step)
            assert dw[idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_zero_state_start(self):
        x, w, u, b = random_gru_instance(5, t=1)
        h, z, r, n, vn = gru_forward(x, w, u, b)
        # first step sees h_prev = 0: h_0 = (1 - z_0) * n_0 exactly
        np.testing.assert_allclose(h[0], (1 - z[0]) * n[0], atol=1e-15)
        assert (vn[0] == 0).all()
