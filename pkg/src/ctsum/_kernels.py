"""Hot numeric kernels: CTC forward recursion and GRU forward/backward.

Every kernel is written as a plain numpy function and JIT-compiled with
numba at import time. Set ``CTS_NO_NUMBA=1`` to skip compilation and run
the pure-numpy fallback path instead (same source, no JIT). The
undecorated originals stay importable with a ``_py`` suffix so the two
paths can be compared, e.g. by ``benchmarks/kernel_bench.py``.

All kernels expect C-contiguous float64 arrays.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CTS_NO_NUMBA", "0").lower() not in (
    "1",
    "true",
    "yes",
)

NEG_INF = -np.inf


def _jit(fn):
    if USE_NUMBA:
        return njit(cache=True)(fn)
    return fn


def _logaddexp2_py(a, b):
    # two-term log-sum-exp; tolerates -inf on either side
    if a < b:
        a, b = b, a
    if b == NEG_INF:
        return a
    return a + np.log1p(np.exp(b - a))


_logaddexp2 = _jit(_logaddexp2_py)


def ctc_forward_ll_py(log_probs, ext):
    """Total log-probability of all alignments of an expanded CTC target.

    log_probs : (T, V) per-frame label log-posteriors
    ext       : (2L+1,) target interleaved with blanks, blanks at even slots

    Standard forward recursion over the expanded target, log domain. The
    skip transition s-2 -> s is allowed only between distinct non-blank
    labels, which is equivalent to ext[s] != ext[s-2] since even slots all
    hold the blank.
    """
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full(S, NEG_INF)
    alpha[0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S - 1, -1, -1):
            a = alpha[s]
            if s >= 1:
                a = _logaddexp2(a, alpha[s - 1])
            if s >= 2 and ext[s] != ext[s - 2]:
                a = _logaddexp2(a, alpha[s - 2])
            alpha[s] = a + log_probs[t, ext[s]]
    if S > 1:
        return _logaddexp2(alpha[S - 1], alpha[S - 2])
    return alpha[0]


ctc_forward_ll = _jit(ctc_forward_ll_py)


def gru_forward_py(x, w, u, b):
    """One direction of a 3-gate GRU layer over a full sequence.

    x : (T, Din) inputs, already in processing order
    w : (3H, Din) input weights, gate blocks stacked [update; reset; cand]
    u : (3H, H) recurrent weights, same block layout
    b : (3H,) bias

    Cell, with s = sigmoid and blocks a = w @ x_t + b, v = u @ h_prev:
        z = s(a_z + v_z)
        r = s(a_r + v_r)
        n = tanh(a_n + r * v_n)
        h = (1 - z) * n + z * h_prev

    Returns (h, z, r, n, vn), each (T, H); vn is the recurrent candidate
    block v_n cached for the backward pass.
    """
    T = x.shape[0]
    H = u.shape[1]
    h = np.empty((T, H))
    z = np.empty((T, H))
    r = np.empty((T, H))
    n = np.empty((T, H))
    vn = np.empty((T, H))
    h_prev = np.zeros(H)
    for t in range(T):
        a = np.dot(w, x[t]) + b
        v = np.dot(u, h_prev)
        zt = 1.0 / (1.0 + np.exp(-(a[:H] + v[:H])))
        rt = 1.0 / (1.0 + np.exp(-(a[H : 2 * H] + v[H : 2 * H])))
        vnt = v[2 * H :]
        nt = np.tanh(a[2 * H :] + rt * vnt)
        ht = (1.0 - zt) * nt + zt * h_prev
        z[t] = zt
        r[t] = rt
        n[t] = nt
        vn[t] = vnt
        h[t] = ht
        h_prev = ht
    return h, z, r, n, vn


gru_forward = _jit(gru_forward_py)


def gru_backward_py(x, h, z, r, n, vn, w, u, dh_out):
    """Backward pass matching gru_forward; dh_out is dLoss/dh per step.

    Returns (dw, du, db, dx) with dx shaped like x for stacking layers.
    """
    T, din = x.shape
    H = h.shape[1]
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(3 * H)
    dx = np.empty((T, din))
    carry = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + carry
        if t > 0:
            h_prev = h[t - 1]
        else:
            h_prev = np.zeros(H)
        zt = z[t]
        nt = n[t]
        rt = r[t]
        ds_z = dh * (h_prev - nt) * zt * (1.0 - zt)
        ds_n = dh * (1.0 - zt) * (1.0 - nt * nt)
        ds_r = ds_n * vn[t] * rt * (1.0 - rt)
        da = np.empty(3 * H)
        da[:H] = ds_z
        da[H : 2 * H] = ds_r
        da[2 * H :] = ds_n
        dv = np.empty(3 * H)
        dv[:H] = ds_z
        dv[H : 2 * H] = ds_r
        dv[2 * H :] = ds_n * rt
        dw += np.outer(da, x[t])
        du += np.outer(dv, h_prev)
        db += da
        dx[t] = np.dot(w.T, da)
        carry = np.dot(u.T, dv) + dh * zt
    return dw, du, db, dx


gru_backward = _jit(gru_backward_py)
