"""Config files: JSON trees with the same keys as the config dataclasses.

A config carries the architecture (stages, positional encoding, ffn_ratio)
and a "train" section; input channels and class count come from the data at
run time.  Overrides use dotted paths into the tree ("train.lr=0.01",
"stages.0.slice.size=16"); "stageN" is accepted as an alias for
"stages.N-1".
"""

import json
from importlib import resources

from ..encoder import PosConfig
from ..errors import ConfigError
from ..model import ModelConfig, StageConfig
from ..slicing import SliceConfig
from ..training import TrainConfig


def bundled_names():
    files = resources.files(__package__)
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_config(name_or_path):
    """Read a config dict from a file path or a bundled name like "awr"."""
    path = str(name_or_path)
    if path.endswith(".json"):
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    candidate = resources.files(__package__) / f"{path}.json"
    if not candidate.is_file():
        raise ConfigError(
            f"unknown config {name_or_path!r}; bundled: {', '.join(bundled_names())}"
        )
    return json.loads(candidate.read_text(encoding="utf-8"))


def apply_overrides(tree, overrides):
    """Apply "dotted.path=value" strings in place; values parse as JSON."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        keys = []
        for part in path.strip().split("."):
            if part.startswith("stage") and part[5:].isdigit():
                keys += ["stages", str(int(part[5:]) - 1)]
            else:
                keys.append(part)
        node = tree
        trail = []
        for key in keys[:-1]:
            node, trail = _descend(node, key, trail, path)
        _assign(node, keys[-1], value, path)
    return tree


def _descend(node, key, trail, path):
    trail = trail + [key]
    if isinstance(node, list):
        try:
            return node[int(key)], trail
        except (ValueError, IndexError):
            raise ConfigError(f"bad index {key!r} in override path {path!r}") from None
    if not isinstance(node, dict) or key not in node:
        raise ConfigError(f"override path {path!r} has no node {'.'.join(trail)!r}")
    return node[key], trail


def _assign(node, key, value, path):
    if isinstance(node, list):
        try:
            node[int(key)] = value
        except (ValueError, IndexError):
            raise ConfigError(f"bad index {key!r} in override path {path!r}") from None
    elif isinstance(node, dict):
        node[key] = value
    else:
        raise ConfigError(f"override path {path!r} does not reach a settable field")


def model_config_from_dict(tree, in_channels, num_classes, seed=0):
    try:
        stages = tuple(
            StageConfig(
                slice=SliceConfig(**s["slice"]),
                layers=s["layers"],
                reduction=s["reduction"],
                heads=s["heads"],
            )
            for s in tree.get("stages", [])
        )
        return ModelConfig(
            stages=stages,
            in_channels=in_channels,
            num_classes=num_classes,
            pos=PosConfig(**tree.get("pos", {})),
            ffn_ratio=tree.get("ffn_ratio", 4),
            post_partition_norm=tree.get("post_partition_norm", False),
            seed=seed,
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed model config: {e}") from None


def train_config_from_dict(tree, **overrides):
    merged = dict(tree.get("train", {}))
    merged.update(overrides)
    try:
        return TrainConfig(**merged)
    except TypeError as e:
        raise ConfigError(f"malformed train config: {e}") from None


def resolved_dict(model_cfg, train_cfg):
    """Round-trip a config pair back to the JSON tree shape (for manifests)."""
    return {
        "stages": [
            {
                "slice": {
                    "size": sc.slice.size,
                    "stride": sc.slice.stride,
                    "channels": sc.slice.channels,
                },
                "layers": sc.layers,
                "reduction": sc.reduction,
                "heads": sc.heads,
            }
            for sc in model_cfg.stages
        ],
        "in_channels": model_cfg.in_channels,
        "num_classes": model_cfg.num_classes,
        "pos": {
            "mode": model_cfg.pos.mode,
            "kernel": model_cfg.pos.kernel,
            "max_len": model_cfg.pos.max_len,
        },
        "ffn_ratio": model_cfg.ffn_ratio,
        "post_partition_norm": model_cfg.post_partition_norm,
        "seed": model_cfg.seed,
        "train": {
            "lr": train_cfg.lr,
            "batch_size": train_cfg.batch_size,
            "max_epochs": train_cfg.max_epochs,
            "eval_every": train_cfg.eval_every,
            "seeds": list(train_cfg.seeds),
            "normalize": train_cfg.normalize,
            "patience": train_cfg.patience,
            "target_accuracy": train_cfg.target_accuracy,
        },
    }
