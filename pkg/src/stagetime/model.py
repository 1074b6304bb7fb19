"""The full classifier: stages -> mean pool over time -> linear head."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine
from .attention import attention_macs
from .encoder import PosConfig, Stage
from .errors import ConfigError, DataError, ShapeError
from .nn import Linear, Module, load_checkpoint, save_checkpoint
from .slicing import SliceConfig, n_slices


@dataclass(frozen=True)
class StageConfig:
    slice: SliceConfig
    layers: int
    reduction: int
    heads: int

    def __post_init__(self):
        if min(self.layers, self.reduction, self.heads) < 1:
            raise ConfigError(f"layers/reduction/heads must be >= 1: {self}")
        if self.slice.channels % self.heads:
            raise ConfigError(
                f"channels {self.slice.channels} not divisible by heads {self.heads}"
            )


@dataclass(frozen=True)
class ModelConfig:
    stages: tuple
    in_channels: int
    num_classes: int
    pos: PosConfig = field(default_factory=PosConfig)
    ffn_ratio: int = 4
    post_partition_norm: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if self.in_channels < 1:
            raise ConfigError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.ffn_ratio < 1:
            raise ConfigError(f"ffn_ratio must be >= 1, got {self.ffn_ratio}")

    @property
    def last_channels(self):
        return self.stages[-1].slice.channels if self.stages else self.in_channels

    def stage_lengths(self, length):
        """Token count entering the pool, stage by stage."""
        out = []
        for stage in self.stages:
            length = n_slices(length, stage.slice.stride)
            out.append(length)
        return out


class StageTimeModel(Module):
    """Hierarchical encoder over (batch, channels, length) series."""

    def __init__(self, cfg: ModelConfig):
        rng = np.random.default_rng(cfg.seed)
        self.cfg = cfg
        self.stages = []
        in_ch = cfg.in_channels
        for sc in cfg.stages:
            self.stages.append(
                Stage(sc.slice, in_ch, sc.layers, sc.heads, sc.reduction, cfg.pos,
                      cfg.ffn_ratio, rng, cfg.post_partition_norm)
            )
            in_ch = sc.slice.channels
        self.classifier = Linear(in_ch, cfg.num_classes, rng)
        self.finalize_names()

    def _featurize(self, batch, record=None):
        x = batch if isinstance(batch, engine.Tensor) else engine.Tensor(batch)
        if x.ndim != 3:
            raise DataError(f"expected (batch, channels, length), got {x.shape}")
        if x.shape[1] != self.cfg.in_channels:
            raise DataError(
                f"model expects {self.cfg.in_channels} channels, batch has {x.shape[1]}"
            )
        x = engine.swapaxes(x, 1, 2)  # time-major: (batch, length, channels)
        for stage in self.stages:
            x = stage(x, record)
        return x

    def embed(self, batch):
        """Mean-pooled final feature map, (batch, last_channels)."""
        return engine.mean_axis(self._featurize(batch), 1)

    def forward(self, batch, record=None):
        pooled = engine.mean_axis(self._featurize(batch, record), 1)
        return self.classifier(pooled)

    def __call__(self, batch):
        return self.forward(batch)

    def param_count(self):
        return sum(p.data.size for p in self.parameters())

    def state_arrays(self):
        return {name: p.data for name, p in self.named_parameters()}

    def save(self, path):
        save_checkpoint(path, self.state_arrays())

    def load(self, path):
        stored = load_checkpoint(path)
        own = dict(self.named_parameters())
        if set(stored) != set(own):
            missing = set(own) - set(stored)
            extra = set(stored) - set(own)
            raise ShapeError(f"checkpoint mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, p in own.items():
            if stored[name].shape != p.data.shape:
                raise ShapeError(
                    f"checkpoint {name} has shape {stored[name].shape}, expected {p.data.shape}"
                )
            p.data = stored[name].astype(p.data.dtype)


def build(cfg: ModelConfig):
    return StageTimeModel(cfg)


def count_macs(cfg: ModelConfig, length, in_channels=None):
    """Analytic per-sample multiply-accumulate breakdown of one forward pass.

    Counts linear maps, convolutions, and the attention score/context
    products; everything else (norms, softmax, activations, pooling, adds)
    is free.  Matches the instrumented engine tally exactly.
    """
    if length < 1:
        raise ConfigError(f"length must be >= 1, got {length}")
    in_ch = cfg.in_channels if in_channels is None else in_channels
    stages = []
    for sc in cfg.stages:
        tokens = n_slices(length, sc.slice.stride)
        c = sc.slice.channels
        partition = tokens * (sc.slice.size * in_ch) * c
        pos = tokens * c * cfg.pos.kernel if cfg.pos.mode == "contextual" else 0
        attn = attention_macs(tokens, c, sc.heads, sc.reduction)
        ffn = 2 * tokens * c * (cfg.ffn_ratio * c)
        per_block = attn["total"] + ffn
        stages.append(
            {
                "tokens": tokens,
                "partition": partition,
                "positional": pos,
                "attention_per_block": attn,
                "ffn_per_block": ffn,
                "blocks": sc.layers,
                "total": partition + pos + sc.layers * per_block,
            }
        )
        length = tokens
        in_ch = c
    classifier = in_ch * cfg.num_classes
    total = classifier + sum(s["total"] for s in stages)
    return {"stages": stages, "classifier": classifier, "total": total}


def score_context_macs(cfg: ModelConfig, length, reduction=None):
    """Total score+context MACs, optionally forcing one reduction everywhere."""
    total = 0
    for sc in cfg.stages:
        tokens = n_slices(length, sc.slice.stride)
        r = sc.reduction if reduction is None else reduction
        a = attention_macs(tokens, sc.slice.channels, sc.heads, r)
        total += sc.layers * (a["scores"] + a["context"])
        length = tokens
    return total


def with_reduction(cfg: ModelConfig, reduction):
    stages = tuple(replace(sc, reduction=reduction) for sc in cfg.stages)
    return replace(cfg, stages=stages)


def write_embeddings_csv(path, model, dataset, batch_size=64):
    """One row per sample: index, label, then the pooled feature values."""
    width = model.cfg.last_channels
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "label"] + [f"e{i}" for i in range(width)])
        row_id = 0
        for start in range(0, dataset.n, batch_size):
            stop = min(start + batch_size, dataset.n)
            emb = model.embed(dataset.samples[start:stop]).data
            for i in range(stop - start):
                writer.writerow(
                    [row_id, int(dataset.labels[row_id])] + [repr(float(v)) for v in emb[i]]
                )
                row_id += 1
