"""Parameters, module tree, and the basic trainable layers."""

import numpy as np

from . import engine
from .engine import Tensor
from .errors import ConfigError, ShapeError


class Parameter(Tensor):
    """A leaf tensor tracked by the optimizer.

    `name` is assigned when the owning model finalizes its registry; it is a
    dotted path into the module tree (e.g. "stages.0.blocks.1.attn.wq.w").
    """

    __slots__ = ("name", "trainable")

    def __init__(self, data, trainable=True):
        super().__init__(data)
        self.name = None
        self.trainable = trainable


def uniform_init(rng, fan_in, shape):
    """Weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)) in the active dtype."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(engine.current_dtype())


def zeros_init(shape):
    return np.zeros(shape, dtype=engine.current_dtype())


class Module:
    """Base class providing parameter discovery over attribute order."""

    def _children(self):
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix=""):
        for key, value in self._children():
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, Parameter):
                yield path, value
            else:
                yield from value.named_parameters(path)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def finalize_names(self):
        names = set()
        for name, p in self.named_parameters():
            p.name = name
            if name in names:
                raise ConfigError(f"duplicate parameter name {name}")
            names.add(name)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        self.w = Parameter(uniform_init(rng, in_features, (in_features, out_features)))
        self.b = Parameter(zeros_init(out_features)) if bias else None

    def __call__(self, x):
        y = engine.matmul(x, self.w)
        return y if self.b is None else engine.add(y, self.b)


class LayerNorm(Module):
    def __init__(self, features, eps=1e-5):
        self.gamma = Parameter(np.ones(features, dtype=engine.current_dtype()))
        self.beta = Parameter(zeros_init(features))
        self.eps = eps

    def __call__(self, x):
        return engine.layer_norm(x, self.gamma, self.beta, self.eps)


CHECKPOINT_VERSION = 1
_MAGIC = b"STCK"


def save_checkpoint(path, named_arrays):
    """Write name -> float32 array pairs in a little-endian binary container.

    Layout: magic, one version byte, u32 entry count, then per entry a
    u16-length utf-8 name, u8 ndim, u32 dims, and the raw <f4 buffer.
    """
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(bytes([CHECKPOINT_VERSION]))
        items = list(named_arrays.items())
        f.write(np.uint32(len(items)).tobytes())
        for name, arr in items:
            raw = name.encode("utf-8")
            f.write(np.uint16(len(raw)).tobytes())
            f.write(raw)
            arr = np.asarray(arr)
            f.write(bytes([arr.ndim]))
            f.write(np.asarray(arr.shape, dtype="<u4").tobytes())
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by `save_checkpoint`; returns name -> array."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise ShapeError(f"{path}: not a checkpoint file")
    version = blob[4]
    if version != CHECKPOINT_VERSION:
        raise ShapeError(f"{path}: unsupported checkpoint version {version}")
    off = 5
    (count,) = np.frombuffer(blob, "<u4", 1, off)
    off += 4
    out = {}
    for _ in range(count):
        (nlen,) = np.frombuffer(blob, "<u2", 1, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += int(nlen)
        ndim = blob[off]
        off += 1
        shape = tuple(int(d) for d in np.frombuffer(blob, "<u4", ndim, off))
        off += 4 * ndim
        size = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(blob, "<f4", size, off).reshape(shape).copy()
        off += 4 * size
    return out
