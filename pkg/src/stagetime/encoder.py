"""Encoder blocks: positional encoding, attention + FFN sub-layers, and the
zero-initialized residual gates that make every freshly built block an exact
identity map.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .attention import ReducedAttention
from .errors import ConfigError
from .nn import LayerNorm, Linear, Module, Parameter, uniform_init, zeros_init
from .slicing import SlicePartition

POS_MODES = ("contextual", "static", "learnable", "none")


@dataclass(frozen=True)
class PosConfig:
    mode: str = "contextual"
    kernel: int = 3  # odd, so symmetric padding preserves length
    max_len: int = 4096  # capacity of the learnable table

    def __post_init__(self):
        if self.mode not in POS_MODES:
            raise ConfigError(f"positional mode must be one of {POS_MODES}, got {self.mode!r}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"positional kernel must be odd and >= 1, got {self.kernel}")
        if self.max_len < 1:
            raise ConfigError(f"max_len must be >= 1, got {self.max_len}")


def sinusoid_table(length, channels, dtype):
    """The fixed sin/cos position table of the original transformer."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, channels, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, i / channels)
    table = np.zeros((length, channels), dtype=np.float64)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : channels // 2])
    return table.astype(dtype)


class PositionalEncoding(Module):
    """Adds position information to a token sequence.

    contextual: x + depthwise conv over neighbors (zero padding leaks the
    absolute position at the edges); static: x + sinusoid table; learnable:
    x + trainable per-position table; none: x unchanged.
    """

    def __init__(self, cfg: PosConfig, channels, rng):
        self.cfg = cfg
        self.channels = channels
        if cfg.mode == "contextual":
            fan_in = cfg.kernel
            self.weight = Parameter(uniform_init(rng, fan_in, (channels, cfg.kernel, 1)))
            self.bias = Parameter(zeros_init(channels))
        elif cfg.mode == "learnable":
            table = 0.02 * rng.standard_normal((cfg.max_len, channels))
            self.table = Parameter(table.astype(engine.current_dtype()))

    def __call__(self, x):
        mode = self.cfg.mode
        if mode == "none":
            return x
        length = x.shape[-2]
        if mode == "contextual":
            pad = (self.cfg.kernel - 1) // 2
            signal = engine.conv1d(
                x, self.weight, self.bias, stride=1, pad_left=pad, pad_right=pad,
                groups=self.channels,
            )
            return engine.add(x, signal)
        if mode == "static":
            table = sinusoid_table(length, self.channels, x.dtype)
            return engine.add(x, engine.Tensor(table))
        if length > self.cfg.max_len:
            raise ConfigError(
                f"sequence length {length} exceeds learnable table capacity {self.cfg.max_len}"
            )
        return engine.add(x, engine.slice_time(self.table, 0, length))


class FeedForward(Module):
    def __init__(self, channels, hidden, rng):
        self.lin1 = Linear(channels, hidden, rng)
        self.lin2 = Linear(hidden, channels, rng)

    def __call__(self, x):
        return self.lin2(engine.gelu(self.lin1(x)))


class EncoderBlock(Module):
    """Pre-norm attention and FFN sub-layers, each behind a scalar residual
    gate initialized to zero (so the block starts as the identity)."""

    def __init__(self, channels, heads, reduction, ffn_ratio, rng):
        self.norm1 = LayerNorm(channels)
        self.attn = ReducedAttention(channels, heads, reduction, rng)
        self.alpha_attn = Parameter(zeros_init(()))
        self.norm2 = LayerNorm(channels)
        self.ffn = FeedForward(channels, ffn_ratio * channels, rng)
        self.alpha_ffn = Parameter(zeros_init(()))

    def __call__(self, x, record=None):
        y = engine.add(x, engine.mul(self.alpha_attn, self.attn(self.norm1(x), record)))
        z = engine.add(y, engine.mul(self.alpha_ffn, self.ffn(self.norm2(y))))
        return z


class Stage(Module):
    """Partition into coarser tokens, add positions, run encoder blocks."""

    def __init__(self, slice_cfg, in_channels, layers, heads, reduction, pos_cfg,
                 ffn_ratio, rng, post_partition_norm=False):
        self.partition = SlicePartition(slice_cfg, in_channels, rng)
        self.post_norm = LayerNorm(slice_cfg.channels) if post_partition_norm else None
        self.pos = PositionalEncoding(pos_cfg, slice_cfg.channels, rng)
        self.blocks = [
            EncoderBlock(slice_cfg.channels, heads, reduction, ffn_ratio, rng)
            for _ in range(layers)
        ]

    def __call__(self, x, record=None):
        x = self.partition(x)
        if self.post_norm is not None:
            x = self.post_norm(x)
        x = self.pos(x)
        for block in self.blocks:
            x = block(x, record)
        return x

    def output_length(self, length):
        return self.partition.output_length(length)
