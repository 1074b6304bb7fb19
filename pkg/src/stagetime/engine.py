"""Dense-array reverse-mode autodiff engine.

Arrays are numpy buffers; every operation records its parents and a backward
closure, and `backward()` walks the graph in reverse topological order.
Training runs in float32; wrap construction in `default_dtype(np.float64)`
for finite-difference work, where float32 rounding would swamp the check.

Gradients accumulate across backward calls and are cleared by the optimizer
step, not by backward itself.

Multiply-accumulate accounting: inside a `mac_tally()` block, matmul and
conv1d add one MAC per scalar multiply-add they execute.  Normalizations,
softmax, activations and plain additions are not counted; this is the
convention used everywhere cost numbers are reported.
"""

from contextlib import contextmanager

import numpy as np

from . import backend
from .errors import ConfigError, DataError, NumericError, ShapeError, UsageError

_default_dtype = np.dtype(np.float32)


def current_dtype():
    return _default_dtype


@contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype used for newly created tensors."""
    global _default_dtype
    old = _default_dtype
    _default_dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _default_dtype = old


class MacTally:
    """Running multiply-accumulate count for instrumented execution."""

    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)


_active_tally = None


@contextmanager
def mac_tally():
    """Count MACs executed by matmul/conv1d while the block runs."""
    global _active_tally
    old = _active_tally
    tally = MacTally()
    _active_tally = tally
    try:
        yield tally
    finally:
        _active_tally = old


def _count_macs(n):
    if _active_tally is not None:
        _active_tally.add(n)


class Tensor:
    """A dense array plus its position in the backward graph."""

    __slots__ = ("data", "_grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, dtype=None):
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            arr = data
        else:
            arr = np.asarray(data, dtype=_default_dtype)
        self.data = arr
        self._grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def grad(self):
        """Accumulated gradient; zeros if this tensor was never reached."""
        if self._grad is None:
            return np.zeros_like(self.data)
        return self._grad

    def zero_grad(self):
        self._grad = None

    def item(self):
        return float(self.data.reshape(-1)[0])

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    # operator sugar; scalars multiply via `scale`, everything else broadcasts
    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self):
        return tsum(self)

    def mean(self, axis):
        return mean_axis(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root):
    """Propagate gradients from a scalar back to every reachable tensor.

    Each call computes one clean pass and adds it into `.grad`, so backward
    on a second loss (or the same loss again) accumulates rather than
    compounding partially-propagated values.
    """
    if not isinstance(root, Tensor):
        raise UsageError("backward expects a Tensor")
    if root.data.size != 1:
        raise UsageError(f"backward root must be scalar, got shape {root.data.shape}")
    order = _topo_order(root)
    local = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = local.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, gp in zip(node._parents, node._backward(g)):
            if gp is None:
                continue
            prev = local.get(id(parent))
            # views are fine here: entries are only ever rebound, never
            # mutated in place
            local[id(parent)] = gp if prev is None else prev + gp
    for node in order:
        g = local.get(id(node))
        if g is None:
            continue
        node._grad = g if node._grad is None else node._grad + g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to `shape`."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from None
    t = Tensor(out, parents=(a, b))
    t._backward = lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
    return t


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from None
    t = Tensor(out, parents=(a, b))
    t._backward = lambda g: (
        _unbroadcast(g * b.data, a.shape),
        _unbroadcast(g * a.data, b.shape),
    )
    return t


def neg(x):
    x = as_tensor(x)
    t = Tensor(-x.data, parents=(x,))
    t._backward = lambda g: (-g,)
    return t


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    t = Tensor(x.data * c, parents=(x,))
    t._backward = lambda g: (g * c,)
    return t


def matmul(a, b):
    """Matrix product over the trailing two axes, leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeError(f"matmul batch extents disagree: {a.shape} x {b.shape}") from None
    _count_macs(out.size * a.shape[-1])
    t = Tensor(out, parents=(a, b))

    def _bwd(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape)
        return ga, gb

    t._backward = _bwd
    return t


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    t = Tensor(x.data.reshape(shape), parents=(x,))
    t._backward = lambda g: (g.reshape(old),)
    return t


def swapaxes(x, a, b):
    # contiguous results keep downstream matmul on the fast BLAS path
    x = as_tensor(x)
    t = Tensor(np.ascontiguousarray(x.data.swapaxes(a, b)), parents=(x,))
    t._backward = lambda g: (np.ascontiguousarray(g.swapaxes(a, b)),)
    return t


def concat_last(tensors):
    tensors = [as_tensor(t) for t in tensors]
    widths = [t.shape[-1] for t in tensors]
    t = Tensor(np.concatenate([t.data for t in tensors], axis=-1), parents=tuple(tensors))

    def _bwd(g):
        out, start = [], 0
        for w in widths:
            out.append(np.ascontiguousarray(g[..., start : start + w]))
            start += w
        return tuple(out)

    t._backward = _bwd
    return t


def slice_time(x, start, stop):
    """Rows start:stop along the second-to-last axis."""
    x = as_tensor(x)
    t = Tensor(np.ascontiguousarray(x.data[..., start:stop, :]), parents=(x,))

    def _bwd(g):
        gx = np.zeros_like(x.data)
        gx[..., start:stop, :] = g
        return (gx,)

    t._backward = _bwd
    return t


def pad_time(x, left, right):
    """Zero-pad along the second-to-last axis."""
    x = as_tensor(x)
    if left == 0 and right == 0:
        out = x.data
    else:
        widths = [(0, 0)] * x.ndim
        widths[-2] = (left, right)
        out = np.pad(x.data, widths)
    length = x.shape[-2]
    t = Tensor(out, parents=(x,))
    t._backward = lambda g: (np.ascontiguousarray(g[..., left : left + length, :]),)
    return t


def mean_axis(x, axis):
    x = as_tensor(x)
    axis = axis if axis >= 0 else x.ndim + axis
    n = x.shape[axis]
    t = Tensor(x.data.mean(axis=axis), parents=(x,))

    def _bwd(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), x.shape),)

    t._backward = _bwd
    return t


def tsum(x):
    """Sum of all elements, as a scalar tensor."""
    x = as_tensor(x)
    t = Tensor(np.asarray(x.data.sum(), dtype=x.dtype), parents=(x,))
    t._backward = lambda g: (np.broadcast_to(g, x.shape),)
    return t


def gelu(x):
    """Gaussian error linear unit (tanh form)."""
    x = as_tensor(x)
    xd = x.data
    y, tanh = backend.gelu_forward(xd)
    t = Tensor(y, parents=(x,))
    t._backward = lambda g: (backend.gelu_backward(xd, tanh, g),)
    return t


def softmax_last(x):
    """Softmax along the last axis, max-subtracted for stability."""
    x = as_tensor(x)
    if x.shape[-1] < 1:
        raise ShapeError(f"softmax needs a non-empty last axis, got {x.shape}")
    row_max = x.data.max(axis=-1, keepdims=True)
    # max catches nan/+inf, min catches nan/-inf; no boolean temporary
    if not (np.isfinite(row_max.max()) and np.isfinite(x.data.min())):
        raise NumericError("softmax input contains non-finite values")
    y = x.data - row_max
    np.exp(y, out=y)
    y /= y.sum(axis=-1, keepdims=True)
    t = Tensor(y, parents=(x,))

    def _bwd(g):
        dot = np.einsum("...i,...i->...", g, y)[..., None]
        out = g - dot
        out *= y
        return (out,)

    t._backward = _bwd
    return t


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layer_norm params must have shape ({c},), got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xhat = x.data - mu
    var = np.einsum("...i,...i->...", xhat, xhat)[..., None] / c
    inv = 1.0 / np.sqrt(var + eps)
    xhat *= inv
    y = xhat * gamma.data
    y += beta.data
    t = Tensor(y, parents=(x, gamma, beta))

    def _bwd(g):
        gxhat = g * gamma.data
        m1 = gxhat.mean(axis=-1, keepdims=True)
        m2 = np.einsum("...i,...i->...", gxhat, xhat)[..., None] / c
        gx = gxhat
        gx -= m1
        gx -= xhat * m2
        gx *= inv
        g2 = g.reshape(-1, c)
        return gx, np.einsum("ri,ri->i", g2, xhat.reshape(-1, c)), g2.sum(axis=0)

    t._backward = _bwd
    return t


def _out_length(length, size, stride, pad_left, pad_right):
    n_out = (length + pad_left + pad_right - size) // stride + 1
    if n_out < 1:
        raise ConfigError(
            f"window size {size} with stride {stride} and padding "
            f"({pad_left},{pad_right}) yields no output for length {length}"
        )
    return n_out


def unfold_time(x, size, stride, pad_left=0, pad_right=0):
    """Sliding windows along the time axis, flattened across channels.

    (batch, l, c) -> (batch, n_out, size*c) with zero padding outside the
    input; n_out = floor((l + pads - size)/stride) + 1.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"unfold_time expects (batch, length, channels), got {x.shape}")
    if size < 1 or stride < 1:
        raise ConfigError(f"window size and stride must be >= 1, got {size}, {stride}")
    length = x.shape[1]
    n_out = _out_length(length, size, stride, pad_left, pad_right)
    out = backend.unfold(x.data, size, stride, pad_left, n_out)
    t = Tensor(out, parents=(x,))
    t._backward = lambda g: (backend.fold(g, length, size, stride, pad_left),)
    return t


def conv1d(x, weight, bias=None, stride=1, pad_left=0, pad_right=0, groups=1):
    """1-D cross-correlation over the time axis.

    x: (batch, l, c_in) or (l, c_in); weight: (c_out, k, c_in // groups);
    bias: (c_out,) or None.  Zero padding; output length
    floor((l + pads - k)/stride) + 1 must be >= 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    squeeze = x.ndim == 2
    xw = reshape(x, (1,) + x.shape) if squeeze else x
    if xw.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d got x {x.shape}, weight {weight.shape}")
    b_sz, length, c_in = xw.shape
    c_out, k, c_in_g = weight.shape
    if c_in % groups or c_out % groups or c_in_g != c_in // groups:
        raise ShapeError(
            f"conv1d groups={groups} incompatible with c_in={c_in}, weight {weight.shape}"
        )
    n_out = _out_length(length, k, stride, pad_left, pad_right)
    cog = c_out // groups

    u = backend.unfold(xw.data, k, stride, pad_left, n_out)
    u4 = u.reshape(b_sz, n_out, k, groups, c_in_g)
    w4 = weight.data.reshape(groups, cog, k, c_in_g)
    y = np.einsum("btkgc,gokc->btgo", u4, w4).reshape(b_sz, n_out, c_out)
    _count_macs(b_sz * n_out * c_out * k * c_in_g)

    parents = (xw, weight)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"conv1d bias must have shape ({c_out},), got {bias.shape}")
        y = y + bias.data
        parents = (xw, weight, bias)
    t = Tensor(y, parents=parents)

    def _bwd(g):
        gyg = g.reshape(b_sz, n_out, groups, cog)
        gw = np.einsum("btkgc,btgo->gokc", u4, gyg).reshape(c_out, k, c_in_g)
        gu = np.einsum("btgo,gokc->btkgc", gyg, w4).reshape(b_sz, n_out, k * c_in)
        gx = backend.fold(gu, length, k, stride, pad_left)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 1))

    t._backward = _bwd
    return reshape(t, t.shape[1:]) if squeeze else t


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects (batch, classes) logits, got {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    bad = np.where((labels < 0) | (labels >= k))[0]
    if bad.size:
        raise DataError(f"label {labels[bad[0]]} out of range [0, {k}) at sample {bad[0]}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    per_sample = lse - z[np.arange(n), labels]
    t = Tensor(np.asarray(per_sample.mean(), dtype=logits.dtype), parents=(logits,))

    def _bwd(g):
        p = np.exp(z)
        p /= p.sum(axis=-1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        return (g * p / n,)

    t._backward = _bwd
    return t
