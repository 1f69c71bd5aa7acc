"""Minimal dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: every primitive records a backward closure on its result
node, and ``backward`` replays the recorded graph in reverse topological
order. The tape is rebuilt on every forward pass; there is no graph
caching. ``finite_diff_grad`` is the independent central-difference
oracle used to check every gradient claim in the test suite.
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform for a primitive."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the context."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """Dense float64 array node.

    Data is treated as immutable once created; ``grad`` is the only
    mutable buffer and accumulates across backward calls until zeroed.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        backward(self)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # -- operators ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return pow_const(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    """Build a result node, recording on the tape only when needed."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(root: Tensor):
    """Reverse-mode sweep from a scalar root.

    Gradients accumulate into leaf ``grad`` buffers; calling twice
    without zeroing doubles them.
    """
    if root.data.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.data.shape}")
    # Iterative topological order (graphs can be deep for long scans).
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    grads = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            if node.requires_grad:
                node._accumulate(g)
            continue
        for parent, pg in node._backward_fn(g):
            if not parent.requires_grad:
                continue
            key = id(parent)
            prev = grads.get(key)
            # Out-of-place: pg may alias g or another parent's gradient.
            grads[key] = pg if prev is None else prev + pg


# ---------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting, unbroadcast on backward)
# ---------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(g, b.data.shape)))

    return _make(data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def bwd(g):
        return ((a, _unbroadcast(g, a.data.shape)), (b, _unbroadcast(-g, b.data.shape)))

    return _make(data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bwd(g):
        return (
            (a, _unbroadcast(g * b.data, a.data.shape)),
            (b, _unbroadcast(g * a.data, b.data.shape)),
        )

    return _make(data, (a, b), bwd)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def bwd(g):
        return (
            (a, _unbroadcast(g / b.data, a.data.shape)),
            (b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)),
        )

    return _make(data, (a, b), bwd)


def neg(a):
    a = as_tensor(a)

    def bwd(g):
        return ((a, -g),)

    return _make(-a.data, (a,), bwd)


def pow_const(a, exponent):
    a = as_tensor(a)
    e = float(exponent)
    data = a.data ** e

    def bwd(g):
        return ((a, g * e * a.data ** (e - 1.0)),)

    return _make(data, (a,), bwd)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def bwd(g):
        return ((a, g * data),)

    return _make(data, (a,), bwd)


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def bwd(g):
        return ((a, g / a.data),)

    return _make(data, (a,), bwd)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def bwd(g):
        return ((a, g * data * (1.0 - data)),)

    return _make(data, (a,), bwd)


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def bwd(g):
        return ((a, g * (1.0 - data * data)),)

    return _make(data, (a,), bwd)


def relu(a):
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def bwd(g):
        return ((a, g * (a.data > 0)),)

    return _make(data, (a,), bwd)


def softplus(a):
    """log(1 + exp(x)), computed stably."""
    a = as_tensor(a)
    x = a.data
    data = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def bwd(g):
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        return ((a, g * s),)

    return _make(data, (a,), bwd)


# ---------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    data = a.data @ b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)
        return ((a, ga), (b, gb))

    return _make(data, (a, b), bwd)


# ---------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.data.shape).copy()),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return ((a, np.broadcast_to(g, a.data.shape).copy()),)

    return _make(data, (a,), bwd)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.data.shape[i] for i in ax]))
    return sum_(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reduce_max(a, axis, keepdims=False):
    """Max along one axis; gradient routes to the first argmax."""
    a = as_tensor(a)
    data = a.data.max(axis=axis, keepdims=keepdims)
    idx = np.argmax(a.data, axis=axis)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        out = np.zeros_like(a.data)
        np.put_along_axis(out, np.expand_dims(idx, axis), g, axis=axis)
        return ((a, out),)

    return _make(data, (a,), bwd)


# ---------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def bwd(g):
        return ((a, g.reshape(a.data.shape)),)

    return _make(data, (a,), bwd)


def transpose(a, axes=None):
    a = as_tensor(a)
    data = a.data.transpose(axes)
    if axes is None:
        inverse = None
    else:
        inverse = np.argsort(axes)

    def bwd(g):
        return ((a, g.transpose(inverse)),)

    return _make(data, (a,), bwd)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: empty tensor list")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append((t, g[tuple(sl)]))
        return tuple(out)

    return _make(data, tuple(tensors), bwd)


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else len(shape) + axis + 1, 1)
        expanded.append(reshape(t, tuple(shape)))
    return concat(expanded, axis=axis)


def getitem(a, key):
    a = as_tensor(a)
    data = a.data[key]

    def bwd(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return ((a, out),)

    return _make(data, (a,), bwd)


def take(a, indices, axis):
    """Gather along one axis with an integer index array."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"take: indices must be 1-D, got shape {idx.shape}")
    ax = axis if axis >= 0 else a.data.ndim + axis
    data = np.take(a.data, idx, axis=ax)

    def bwd(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (slice(None),) * ax + (idx,), g)
        return ((a, out),)

    return _make(data, (a,), bwd)


# ---------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------

def _im2col(x, kh, kw, stride, out_h, out_w):
    b, c, _, _ = x.shape
    s0, s1, s2, s3 = x.strides
    shape = (b, c, kh, kw, out_h, out_w)
    strides = (s0, s1, s2, s3, s2 * stride, s3 * stride)
    return np.lib.stride_tricks.as_strided(x, shape=shape, strides=strides)


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D convolution over (batch, channels, height, width).

    ``w`` has shape (out_channels, in_channels, kh, kw).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D operands, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[1]:
        raise ShapeError(f"conv2d: channel mismatch between input {x.data.shape} and kernel {w.data.shape}")
    bsz, cin, h, wd = x.data.shape
    cout, _, kh, kw = w.data.shape
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    hp, wp = xp.shape[2], xp.shape[3]
    if hp < kh or wp < kw:
        raise ShapeError(f"conv2d: input {x.data.shape} smaller than kernel {w.data.shape} after padding {padding}")
    out_h = (hp - kh) // stride + 1
    out_w = (wp - kw) // stride + 1
    cols = _im2col(xp, kh, kw, stride, out_h, out_w)  # (B,Cin,kh,kw,oh,ow)
    data = np.einsum("bcklhw,ockl->bohw", cols, w.data, optimize=True)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        data = data + b.data[None, :, None, None]
        parents.append(b)

    def bwd(g):
        gw = np.einsum("bcklhw,bohw->ockl", cols, g, optimize=True)
        gcols = np.einsum("bohw,ockl->bcklhw", g, w.data, optimize=True)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += gcols[:, :, i, j]
        gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        grads = [(x, gx), (w, gw)]
        if b is not None:
            grads.append((b, g.sum(axis=(0, 2, 3))))
        return tuple(grads)

    return _make(data, tuple(parents), bwd)


def conv_transpose2d(x, w, b=None, stride=2):
    """Transposed 2-D convolution with kernel size == stride (exact upsampling).

    ``w`` has shape (in_channels, out_channels, k, k) with k == stride,
    so each input pixel paints a disjoint k-by-k output tile.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv_transpose2d: expected 4-D operands, got {x.data.shape} and {w.data.shape}")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"conv_transpose2d: channel mismatch between input {x.data.shape} and kernel {w.data.shape}")
    k = w.data.shape[2]
    if k != stride or w.data.shape[3] != k:
        raise ShapeError(f"conv_transpose2d: kernel {w.data.shape} must be square with size == stride {stride}")
    bsz, cin, h, wd = x.data.shape
    cout = w.data.shape[1]
    data = np.zeros((bsz, cout, h * stride, wd * stride))
    for i in range(k):
        for j in range(k):
            data[:, :, i::stride, j::stride] = np.einsum("bchw,co->bohw", x.data, w.data[:, :, i, j], optimize=True)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        data = data + b.data[None, :, None, None]
        parents.append(b)

    def bwd(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for i in range(k):
            for j in range(k):
                gij = g[:, :, i::stride, j::stride]
                gx += np.einsum("bohw,co->bchw", gij, w.data[:, :, i, j], optimize=True)
                gw[:, :, i, j] = np.einsum("bchw,bohw->co", x.data, gij, optimize=True)
        grads = [(x, gx), (w, gw)]
        if b is not None:
            grads.append((b, g.sum(axis=(0, 2, 3))))
        return tuple(grads)

    return _make(data, tuple(parents), bwd)


# ---------------------------------------------------------------------
# composites
# ---------------------------------------------------------------------

def softmax(a, axis=-1):
    """Softmax along one axis; subtracts the detached max for stability."""
    a = as_tensor(a)
    shift = Tensor(a.data.max(axis=axis, keepdims=True))
    e = exp(a - shift)
    return e / sum_(e, axis=axis, keepdims=True)


def layer_norm(a, gain, bias, axis=-1, eps=1e-5):
    """Normalize along ``axis`` to zero mean / unit variance, then affine."""
    mu = mean(a, axis=axis, keepdims=True)
    centered = a - mu
    var = mean(centered * centered, axis=axis, keepdims=True)
    return centered / pow_const(var + eps, 0.5) * gain + bias


def bilinear_resize(x, out_h, out_w):
    """Bilinear resize of (batch, channels, h, w) to (out_h, out_w).

    Half-pixel-centered source mapping; built from gathers so gradients
    follow from the primitives.
    """
    x = as_tensor(x)
    b, c, h, w = x.data.shape
    if (h, w) == (out_h, out_w):
        return x

    def axis_coords(n_in, n_out):
        s = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.clip(np.floor(s), 0, n_in - 1).astype(np.intp)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = np.clip(s - lo, 0.0, 1.0)
        return lo, hi, frac

    i0, i1, fi = axis_coords(h, out_h)
    j0, j1, fj = axis_coords(w, out_w)
    flat = reshape(x, (b, c, h * w))
    out = None
    for rows, wr in ((i0, 1.0 - fi), (i1, fi)):
        for cols, wc in ((j0, 1.0 - fj), (j1, fj)):
            idx = (rows[:, None] * w + cols[None, :]).reshape(-1)
            weight = (wr[:, None] * wc[None, :]).reshape(-1)
            term = take(flat, idx, axis=2) * Tensor(weight)
            out = term if out is None else out + term
    return reshape(out, (b, c, out_h, out_w))


# ---------------------------------------------------------------------
# the gradient oracle
# ---------------------------------------------------------------------

def finite_diff_grad(f, x, step=1e-6):
    """Central-difference gradient of a scalar-valued ``f`` at ``x``.

    Perturbs one element at a time: (f(x+h e_i) - f(x-h e_i)) / 2h.
    Evaluations run with the tape disabled; the estimate is independent
    of the reverse-mode path it is used to check.
    """
    if step <= 0:
        raise ValueError("finite_diff_grad: step must be positive")
    x = as_tensor(x)
    base = x.data.copy()
    grad = np.zeros_like(base)
    flat_base = base.reshape(-1)
    flat_grad = grad.reshape(-1)
    with no_grad():
        for i in range(flat_base.size):
            orig = flat_base[i]
            flat_base[i] = orig + step
            hi = f(Tensor(base)).item()
            flat_base[i] = orig - step
            lo = f(Tensor(base)).item()
            flat_base[i] = orig
            flat_grad[i] = (hi - lo) / (2.0 * step)
    return Tensor(grad)


def relative_error(got, want, floor=1e-12):
    """Max-norm relative deviation used by the gradient suites."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    scale = max(np.abs(want).max() if want.size else 0.0, floor)
    return float(np.abs(got - want).max() / scale)
