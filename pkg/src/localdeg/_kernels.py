"""Hot numeric kernels: same-padded 1-D convolution forward and backward.

Two interchangeable backends are compiled at import time:

* ``numba`` -- explicit loops under ``@njit`` (default when numba imports),
* ``numpy`` -- im2col windows plus matmul.

Setting the environment variable ``LOCALDEG_NO_NUMBA=1`` (or numba failing to
import) selects the pure-numpy path. Both backends are always defined so that
tests and ``benchmarks/bench_kernels.py`` can compare them directly.

Shapes follow the convolution contract used throughout the model:
input ``[L, C_in]``, kernel ``[k, C_in, C_out]`` with odd ``k``, bias
``[C_out]``, zero padding of ``(k - 1) // 2`` on both ends so the output is
``[L, C_out]``.
"""

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _unfold(x, k):
    # [L, C] -> [L, k * C] windows with zero padding, row l holding the
    # receptive field of output frame l.
    L, c = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((p, p), (0, 0)))
    return sliding_window_view(xp, (k, c)).reshape(L, k * c)


def conv1d_forward_np(x, w, b):
    L = x.shape[0]
    k, c_in, c_out = w.shape
    return _unfold(x, k) @ w.reshape(k * c_in, c_out) + b


def conv1d_backward_input_np(g, w):
    # Gradient wrt input is a correlation of g with the kernel flipped along
    # the tap axis and transposed in its channel axes.
    k = w.shape[0]
    w_flip = np.ascontiguousarray(w[::-1].transpose(0, 2, 1))
    return conv1d_forward_np(g, w_flip, np.zeros(w.shape[1]))


def conv1d_backward_kernel_np(x, g, k):
    c_in = x.shape[1]
    c_out = g.shape[1]
    dw = _unfold(x, k).T @ g
    return dw.reshape(k, c_in, c_out)


_NUMBA_DISABLED = os.environ.get("LOCALDEG_NO_NUMBA", "").strip().lower() in (
    "1",
    "true",
    "yes",
)

try:
    if _NUMBA_DISABLED:
        raise ImportError("numba disabled via LOCALDEG_NO_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:
    _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def conv1d_forward_nb(x, w, b):
        L, c_in = x.shape
        k, _, c_out = w.shape
        p = (k - 1) // 2
        out = np.empty((L, c_out))
        for l in range(L):
            for co in range(c_out):
                out[l, co] = b[co]
        for l in range(L):
            for dk in range(k):
                t = l + dk - p
                if 0 <= t < L:
                    for ci in range(c_in):
                        v = x[t, ci]
                        for co in range(c_out):
                            out[l, co] += v * w[dk, ci, co]
        return out

    @njit(cache=True)
    def conv1d_backward_input_nb(g, w):
        L, c_out = g.shape
        k, c_in, _ = w.shape
        p = (k - 1) // 2
        dx = np.zeros((L, c_in))
        for t in range(L):
            for dk in range(k):
                l = t + p - dk
                if 0 <= l < L:
                    for ci in range(c_in):
                        acc = 0.0
                        for co in range(c_out):
                            acc += g[l, co] * w[dk, ci, co]
                        dx[t, ci] += acc
        return dx

    @njit(cache=True)
    def conv1d_backward_kernel_nb(x, g, k):
        L, c_in = x.shape
        c_out = g.shape[1]
        p = (k - 1) // 2
        dw = np.zeros((k, c_in, c_out))
        for l in range(L):
            for dk in range(k):
                t = l + dk - p
                if 0 <= t < L:
                    for ci in range(c_in):
                        v = x[t, ci]
                        for co in range(c_out):
                            dw[dk, ci, co] += v * g[l, co]
        return dw

    BACKEND = "numba"
    conv1d_forward = conv1d_forward_nb
    conv1d_backward_input = conv1d_backward_input_nb
    conv1d_backward_kernel = conv1d_backward_kernel_nb
else:
    BACKEND = "numpy"
    conv1d_forward = conv1d_forward_np
    conv1d_backward_input = conv1d_backward_input_np
    conv1d_backward_kernel = conv1d_backward_kernel_np


def backend() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
