"""Minimal dense-tensor reverse-mode automatic differentiation.

Everything is 64-bit floats. Each operation records its parent tensors and a
backward rule on the output tensor; ``backward(loss)`` linearizes the recorded
operations into a topologically ordered tape and walks it exactly once in
reverse. Tensors are immutable after forward construction (data buffers are
never written in place by ops), so sharing them read-only across threads is
safe; a single tape must not be walked concurrently.

There is no general broadcasting: shapes must match exactly, with the two
deliberate exceptions ``add_bias`` (per-column bias) and ``scale_rows``
(per-row scale). Constants (plain numpy arrays) can enter any op via the
``*_const`` variants and receive no gradient.
"""

import numpy as np

from . import _kernels
from .errors import ContractViolationError, DimensionError

_grad_enabled = True


class no_grad:
    """Context manager that disables operation recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """Dense float64 array plus optional gradient buffer and backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _result(data, parents, backward_fn):
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward_fn
        return out
    return Tensor(data)


def _accum(t, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor on the tape.

    ``loss`` must be a finite scalar; anything else is a contract violation.
    """
    if loss.data.shape != ():
        raise ContractViolationError(f"loss must be scalar, got shape {loss.data.shape}")
    if not np.isfinite(loss.data):
        raise ContractViolationError("loss is not finite")

    # Build the tape: every reachable recorded op once, inputs before outputs.
    tape = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            tape.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.asarray(1.0)
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise DimensionError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")

    def bw(g):
        _accum(a, g)
        _accum(b, g)

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")

    def bw(g):
        _accum(a, g)
        _accum(b, -g)

    return _result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")

    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _result(a.data * b.data, (a, b), bw)


def neg(a):
    def bw(g):
        _accum(a, -g)

    return _result(-a.data, (a,), bw)


def add_const(a, c):
    """a + c where c is a plain array or scalar (no gradient to c)."""
    c = np.asarray(c, dtype=np.float64)

    def bw(g):
        _accum(a, g)

    return _result(a.data + c, (a,), bw)


def mul_const(a, c):
    """a * c where c is a plain array or scalar (no gradient to c)."""
    c = np.asarray(c, dtype=np.float64)

    def bw(g):
        _accum(a, g * c)

    return _result(a.data * c, (a,), bw)


def exp(a):
    out_data = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_data)

    return _result(out_data, (a,), bw)


def log(a):
    def bw(g):
        _accum(a, g / a.data)

    return _result(np.log(a.data), (a,), bw)


def sqrt(a):
    out_data = np.sqrt(a.data)

    def bw(g):
        _accum(a, g * 0.5 / out_data)

    return _result(out_data, (a,), bw)


def absolute(a):
    # Subgradient 0 at exactly 0.
    def bw(g):
        _accum(a, g * np.sign(a.data))

    return _result(np.abs(a.data), (a,), bw)


def relu(a):
    def bw(g):
        _accum(a, g * (a.data > 0.0))

    return _result(np.maximum(a.data, 0.0), (a,), bw)


def leaky_relu(a, slope: float):
    """Elementwise max(x, slope * x); the subgradient at 0 is ``slope``."""
    if not 0.0 < slope < 1.0:
        raise ContractViolationError(f"leaky_relu slope must be in (0, 1), got {slope}")
    factor = np.where(a.data > 0.0, 1.0, slope)

    def bw(g):
        _accum(a, g * factor)

    return _result(np.where(a.data > 0.0, a.data, slope * a.data), (a,), bw)


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_all(a):
    def bw(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _result(a.data.sum(), (a,), bw)


def mean_all(a):
    n = a.data.size

    def bw(g):
        _accum(a, np.full_like(a.data, float(g) / n))

    return _result(a.data.mean(), (a,), bw)


def sum_axis(a, axis: int):
    """Sum of a 2-D tensor along one axis, producing a 1-D tensor."""
    if a.data.ndim != 2:
        raise DimensionError("sum_axis expects a 2-D tensor")

    def bw(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _result(a.data.sum(axis=axis), (a,), bw)


def reshape(a, shape):
    old = a.data.shape

    def bw(g):
        _accum(a, g.reshape(old))

    return _result(a.data.reshape(shape), (a,), bw)


def transpose(a):
    if a.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")

    def bw(g):
        _accum(a, np.ascontiguousarray(g.T))

    return _result(np.ascontiguousarray(a.data.T), (a,), bw)


def slice_rows(a, start: int, stop: int):
    if not (0 <= start <= stop <= a.data.shape[0]):
        raise DimensionError(f"slice [{start}:{stop}] out of range for {a.data.shape}")

    def bw(g):
        full = np.zeros_like(a.data)
        full[start:stop] = g
        _accum(a, full)

    return _result(a.data[start:stop].copy(), (a,), bw)


def concat_rows(tensors):
    """Stack 2-D tensors with equal column counts along axis 0."""
    tensors = list(tensors)
    sizes = [t.data.shape[0] for t in tensors]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            _accum(t, g[lo:hi])

    return _result(np.concatenate([t.data for t in tensors], axis=0), tensors, bw)


def stack_scalars(tensors):
    """Stack scalar tensors into a 1-D vector."""
    tensors = list(tensors)

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, np.asarray(g[i]))

    return _result(np.array([t.data for t in tensors]), tensors, bw)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: incompatible {a.data.shape} @ {b.data.shape}")

    def bw(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), bw)


def add_bias(x, b):
    """x[N, C] + b[C], the single sanctioned broadcast."""
    if x.data.ndim != 2 or b.data.shape != (x.data.shape[1],):
        raise DimensionError(f"add_bias: {x.data.shape} with bias {b.data.shape}")

    def bw(g):
        _accum(x, g)
        _accum(b, g.sum(axis=0))

    return _result(x.data + b.data, (x, b), bw)


def scale_rows(x, s):
    """Row-wise scaling: out[i, :] = x[i, :] * s[i]."""
    if x.data.ndim != 2 or s.data.shape != (x.data.shape[0],):
        raise DimensionError(f"scale_rows: {x.data.shape} with scale {s.data.shape}")

    def bw(g):
        _accum(x, g * s.data[:, None])
        _accum(s, (g * x.data).sum(axis=1))

    return _result(x.data * s.data[:, None], (x, s), bw)


def normalize_rows(x, eps: float = 1e-12):
    """Project each row of x[N, D] onto the unit sphere."""
    if x.data.ndim != 2:
        raise DimensionError("normalize_rows expects a 2-D tensor")
    norms = np.sqrt((x.data * x.data).sum(axis=1) + eps)
    y = x.data / norms[:, None]

    def bw(g):
        # d/dx (x / |x|) applied row-wise.
        dots = (g * y).sum(axis=1)
        _accum(x, (g - y * dots[:, None]) / norms[:, None])

    return _result(y, (x,), bw)


def pairwise_diff(v):
    """All ordered differences of a 1-D tensor: out[i, j] = v[i] - v[j]."""
    if v.data.ndim != 1:
        raise DimensionError("pairwise_diff expects a 1-D tensor")

    def bw(g):
        _accum(v, g.sum(axis=1) - g.sum(axis=0))

    return _result(v.data[:, None] - v.data[None, :], (v,), bw)


# ---------------------------------------------------------------------------
# network ops


def conv1d(x, w, b):
    """Same-padded 1-D convolution.

    x: [L, C_in], w: [k, C_in, C_out] with odd k, b: [C_out] -> [L, C_out].
    """
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise DimensionError("conv1d expects x[L,C_in], w[k,C_in,C_out]")
    k, c_in, c_out = w.data.shape
    if k % 2 == 0:
        raise DimensionError(f"conv1d kernel width must be odd, got {k}")
    if x.data.shape[0] < 1:
        raise DimensionError("conv1d input must have at least one frame")
    if x.data.shape[1] != c_in or b.data.shape != (c_out,):
        raise DimensionError(
            f"conv1d: x {x.data.shape}, w {w.data.shape}, b {b.data.shape}"
        )

    out_data = _kernels.conv1d_forward(x.data, w.data, b.data)

    def bw(g):
        g = np.ascontiguousarray(g)
        _accum(x, _kernels.conv1d_backward_input(g, w.data))
        _accum(w, _kernels.conv1d_backward_kernel(x.data, g, k))
        _accum(b, g.sum(axis=0))

    return _result(out_data, (x, w, b), bw)


class BatchNormState:
    """Running mean/variance per channel plus the normalization constants."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.steps = 0
        self._warned = False

    def update(self, mu, var):
        m = self.momentum
        self.mean = (1.0 - m) * self.mean + m * mu
        self.var = (1.0 - m) * self.var + m * var
        self.steps += 1

    def warn_if_untrained(self):
        if self.steps == 0 and not self._warned:
            import logging

            logging.getLogger(__name__).warning(
                "batch_norm eval before any train step: using initialized stats"
            )
            self._warned = True


def batch_norm(x, gamma, beta, state, training: bool, update_running: bool = True):
    """Per-channel batch normalization over all rows of x[N, C].

    In training mode the batch statistics normalize and the running
    statistics in ``state`` are updated with its momentum (unless
    ``update_running`` is off, e.g. for auxiliary passes); in eval mode the
    running statistics normalize.
    """
    if x.data.ndim != 2:
        raise DimensionError("batch_norm expects a 2-D tensor")
    n, c = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError("batch_norm: gamma/beta must have one entry per channel")
    eps = state.eps

    if training:
        if n < 2:
            raise DimensionError("batch_norm training mode needs at least 2 rows")
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        if update_running:
            state.update(mu, var)
    else:
        state.warn_if_untrained()
        mu = state.mean
        var = state.var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out_data = xhat * gamma.data + beta.data

    if training:

        def bw(g):
            dxhat = g * gamma.data
            _accum(gamma, (g * xhat).sum(axis=0))
            _accum(beta, g.sum(axis=0))
            _accum(
                x,
                inv_std
                / n
                * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)),
            )

    else:

        def bw(g):
            _accum(gamma, (g * xhat).sum(axis=0))
            _accum(beta, g.sum(axis=0))
            _accum(x, g * gamma.data * inv_std)

    return _result(out_data, (x, gamma, beta), bw)
