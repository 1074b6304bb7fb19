"""Window slicing: turn a feature map into coarser tokens.

Each output position is a weight-shared linear projection of the flattened
window x[t*stride : t*stride + size, :].  The input is right-padded with
zeros to stride*ceil(l/stride) + (size - stride), so no input point is ever
dropped and the output length is exactly ceil(l/stride) for any l.
"""

import math
from dataclasses import dataclass

from . import engine
from .errors import ConfigError
from .nn import Linear, Module


@dataclass(frozen=True)
class SliceConfig:
    size: int  # window width, in input time steps
    stride: int  # projection stride; <= size so coverage has no gaps
    channels: int  # output width

    def __post_init__(self):
        if self.size < 1 or self.stride < 1 or self.channels < 1:
            raise ConfigError(f"slice size/stride/channels must be >= 1: {self}")
        if self.stride > self.size:
            raise ConfigError(
                f"stride {self.stride} > window {self.size} would skip input points"
            )


def n_slices(length, stride):
    return math.ceil(length / stride)


def padded_length(length, size, stride):
    return stride * math.ceil(length / stride) + (size - stride)


class SlicePartition(Module):
    """(batch, l, c_in) -> (batch, ceil(l/stride), channels)."""

    def __init__(self, cfg: SliceConfig, in_channels, rng):
        self.cfg = cfg
        self.in_channels = in_channels
        self.proj = Linear(cfg.size * in_channels, cfg.channels, rng)

    def __call__(self, x):
        size, stride = self.cfg.size, self.cfg.stride
        length = x.shape[-2]
        pad_right = padded_length(length, size, stride) - length
        windows = engine.unfold_time(x, size, stride, 0, pad_right)
        return self.proj(windows)

    def output_length(self, length):
        return n_slices(length, self.cfg.stride)
