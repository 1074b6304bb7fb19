"""Kernel backend selection: numba-jitted loops or pure numpy.

The jit-worthy inner loops are the sliding-window gather (`unfold`), its
scatter-add adjoint (`fold`), and the fused optimizer update; the rest of
the engine is BLAS-bound matmul or SIMD elementwise work that numpy already
handles well.  Set STAGETIME_BACKEND=numpy to force the pure numpy path,
STAGETIME_BACKEND=numba to require the jitted one; the default ("auto")
uses numba when it is importable.

Both implementations are always importable under their `_numpy` / `_numba`
suffixes, so they can be compared directly regardless of the active
selection.
"""

import os

import numpy as np

_choice = os.environ.get("STAGETIME_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy", ""):
    raise ValueError(f"STAGETIME_BACKEND must be auto|numba|numpy, got {_choice!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via STAGETIME_BACKEND=numpy
    numba = None
    HAVE_NUMBA = False

if _choice == "numba" and not HAVE_NUMBA:
    raise ImportError("STAGETIME_BACKEND=numba but numba is not installed")

USE_NUMBA = HAVE_NUMBA if _choice in ("auto", "") else _choice == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


_GELU_K0 = np.sqrt(2.0 / np.pi)
_GELU_K1 = 0.044715


def gelu_forward_numpy(x):
    """tanh-form GELU; returns (value, tanh cache for the backward pass)."""
    t = x * x
    t *= x
    t *= _GELU_K1
    t += x
    t *= _GELU_K0
    np.tanh(t, out=t)
    y = t + 1.0
    y *= x
    y *= 0.5
    return y, t


def gelu_backward_numpy(x, t, g):
    d = x * x
    d *= 3.0 * _GELU_K1
    d += 1.0
    d *= _GELU_K0  # d/dx of the tanh argument
    u = t * t
    np.subtract(1.0, u, out=u)
    u *= d
    u *= x
    u += 1.0 + t
    u *= 0.5
    u *= g
    return u


def adam_update_numpy(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * np.square(g)
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def unfold_numpy(x, size, stride, pad_left, n_out):
    """Gather sliding windows of `x` (batch, length, channels).

    Returns (batch, n_out, size*channels); window t covers input positions
    t*stride - pad_left ... t*stride - pad_left + size - 1, positions outside
    [0, length) read as zero.
    """
    b, length, c = x.shape
    pos = np.arange(n_out)[:, None] * stride + np.arange(size)[None, :] - pad_left
    valid = (pos >= 0) & (pos < length)
    gathered = x[:, np.where(valid, pos, 0), :]
    gathered *= valid[None, :, :, None]
    return np.ascontiguousarray(gathered.reshape(b, n_out, size * c))


def fold_numpy(gy, length, size, stride, pad_left):
    """Scatter-add adjoint of `unfold_numpy`."""
    b, n_out, sc = gy.shape
    c = sc // size
    gx = np.zeros((b, length, c), dtype=gy.dtype)
    pos = np.arange(n_out)[:, None] * stride + np.arange(size)[None, :] - pad_left
    valid = (pos >= 0) & (pos < length)
    vals = gy.reshape(b, n_out, size, c) * valid[None, :, :, None]
    np.add.at(gx, (slice(None), np.where(valid, pos, 0)), vals)
    return gx


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _adam_jit(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):  # pragma: no cover
        for i in range(p.size):
            gi = g[i]
            mi = beta1 * m[i] + (1.0 - beta1) * gi
            vi = beta2 * v[i] + (1.0 - beta2) * gi * gi
            m[i] = mi
            v[i] = vi
            p[i] -= lr * (mi / bc1) / (np.sqrt(vi / bc2) + eps)

    def adam_update_numba(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2):
        g = np.ascontiguousarray(g).reshape(-1)
        _adam_jit(p.reshape(-1), g, m.reshape(-1), v.reshape(-1),
                  lr, beta1, beta2, eps, bc1, bc2)

    @numba.njit(cache=True)
    def _unfold_jit(x, size, stride, pad_left, out):  # pragma: no cover - jitted
        b, length, c = x.shape
        n_out = out.shape[1]
        for i in range(b):
            for t in range(n_out):
                base = t * stride - pad_left
                for j in range(size):
                    src = base + j
                    if 0 <= src < length:
                        for k in range(c):
                            out[i, t, j * c + k] = x[i, src, k]
                    else:
                        for k in range(c):
                            out[i, t, j * c + k] = 0.0
        return out

    @numba.njit(cache=True)
    def _fold_jit(gy, size, stride, pad_left, gx):  # pragma: no cover - jitted
        b, length, c = gx.shape
        n_out = gy.shape[1]
        for i in range(b):
            for t in range(n_out):
                base = t * stride - pad_left
                for j in range(size):
                    src = base + j
                    if 0 <= src < length:
                        for k in range(c):
                            gx[i, src, k] += gy[i, t, j * c + k]
        return gx

    def unfold_numba(x, size, stride, pad_left, n_out):
        x = np.ascontiguousarray(x)
        out = np.empty((x.shape[0], n_out, size * x.shape[2]), dtype=x.dtype)
        return _unfold_jit(x, size, stride, pad_left, out)

    def fold_numba(gy, length, size, stride, pad_left):
        gy = np.ascontiguousarray(gy)
        c = gy.shape[2] // size
        gx = np.zeros((gy.shape[0], length, c), dtype=gy.dtype)
        return _fold_jit(gy, size, stride, pad_left, gx)


# numpy's SIMD tanh beats a jitted scalar loop, so gelu stays vectorized
# numpy under both backends; only the gather/scatter loops benefit from jit.
gelu_forward = gelu_forward_numpy
gelu_backward = gelu_backward_numpy

if USE_NUMBA:
    unfold = unfold_numba
    fold = fold_numba
    adam_update = adam_update_numba
else:
    unfold = unfold_numpy
    fold = fold_numpy
    adam_update = adam_update_numpy
