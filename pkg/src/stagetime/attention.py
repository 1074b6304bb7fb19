"""Multi-head self-attention with temporally reduced keys and values.

Queries keep the full resolution; keys and values are first shortened by a
factor `reduction`: consecutive groups of `reduction` positions are
channel-concatenated, linearly projected back to the model width, and layer
normalized.  Scoring cost therefore drops to 1/reduction of standard
self-attention while every query still attends over the whole (reduced)
sequence.
"""

import math

import numpy as np

from . import engine
from .errors import ConfigError
from .nn import LayerNorm, Linear, Module
from .slicing import n_slices


def attention(q, k, v, prescaled=False):
    """softmax(q k^T / sqrt(d)) v over the trailing two axes.

    Returns (context, weights); weight rows sum to one.  With `prescaled`
    the caller has already folded 1/sqrt(d) into q.
    """
    scores = engine.matmul(q, engine.swapaxes(k, -1, -2))
    if not prescaled:
        scores = engine.scale(scores, 1.0 / math.sqrt(q.shape[-1]))
    weights = engine.softmax_last(scores)
    return engine.matmul(weights, v), weights


class TemporalReduce(Module):
    """(batch, l, c) -> (batch, ceil(l/r), c) by group-concat + projection + norm."""

    def __init__(self, channels, reduction, rng):
        if reduction < 1:
            raise ConfigError(f"reduction must be >= 1, got {reduction}")
        self.reduction = reduction
        self.channels = channels
        self.proj = Linear(reduction * channels, channels, rng)
        self.norm = LayerNorm(channels)

    def __call__(self, x):
        r = self.reduction
        b, length, c = x.shape
        groups = math.ceil(length / r)
        if r > 1:
            x = engine.pad_time(x, 0, groups * r - length)
            x = engine.reshape(x, (b, groups, r * c))
        return self.norm(self.proj(x))


class ReducedAttention(Module):
    """Multi-head attention; keys/values pass through TemporalReduce.

    `passthrough` with reduction == 1 skips the reduce projection and norm
    entirely, making the layer an exact standard multi-head self-attention;
    it exists so equivalence against an independent reference can be checked.
    Built models never use it.
    """

    def __init__(self, channels, heads, reduction, rng, passthrough=False):
        if channels % heads:
            raise ConfigError(f"channels {channels} not divisible by heads {heads}")
        self.channels = channels
        self.heads = heads
        self.reduction = reduction
        self.wq = Linear(channels, channels, rng)
        self.wk = Linear(channels, channels, rng)
        self.wv = Linear(channels, channels, rng)
        self.wo = Linear(channels, channels, rng)
        if passthrough and reduction != 1:
            raise ConfigError("passthrough requires reduction == 1")
        self.reduce = None if passthrough else TemporalReduce(channels, reduction, rng)

    def _split_heads(self, x):
        b, length, c = x.shape
        x = engine.reshape(x, (b, length, self.heads, c // self.heads))
        return engine.swapaxes(x, 1, 2)

    def __call__(self, x, record=None):
        b, length, c = x.shape
        kv = x if self.reduce is None else self.reduce(x)
        # 1/sqrt(d) applied to q up front: cheaper than scaling the scores
        q = self._split_heads(engine.scale(self.wq(x), 1.0 / math.sqrt(c // self.heads)))
        k = self._split_heads(self.wk(kv))
        v = self._split_heads(self.wv(kv))
        ctx, weights = attention(q, k, v, prescaled=True)
        if record is not None:
            record.append(weights.data)
        ctx = engine.reshape(engine.swapaxes(ctx, 1, 2), (b, length, c))
        return self.wo(ctx)


def attention_macs(length, channels, heads, reduction, with_reduce=True):
    """Per-sample multiply-accumulate breakdown of one attention layer.

    Convention: one MAC per scalar multiply-add in the projections and the
    score/context products; softmax and normalization are free.  `heads`
    does not change the totals (head width is channels/heads) but is kept
    for interface symmetry and validated.
    """
    if length < 1:
        raise ConfigError(f"length must be >= 1, got {length}")
    if channels % heads:
        raise ConfigError(f"channels {channels} not divisible by heads {heads}")
    reduced = n_slices(length, reduction)
    counts = {
        "query_proj": length * channels * channels,
        "reduce_proj": reduced * (reduction * channels) * channels if with_reduce else 0,
        "kv_proj": 2 * reduced * channels * channels,
        "scores": length * reduced * channels,
        "context": length * reduced * channels,
        "out_proj": length * channels * channels,
    }
    counts["total"] = sum(counts.values())
    return counts


def save_attention_weights(path, weights):
    """Dump one layer's softmax matrices to an .npy file (shape header +
    row-major payload)."""
    np.save(path, np.asarray(weights))
