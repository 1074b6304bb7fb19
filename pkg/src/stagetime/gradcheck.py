"""Finite-difference verification of backpropagated gradients.

Central differences are computed in whatever dtype the parameters carry;
callers should build the graph under `engine.default_dtype(np.float64)`
because float32 rounding noise is the same order as the truncation error
being measured.
"""

import numpy as np

from .errors import ConfigError


def finite_difference_check(loss_fn, named_params, h=1e-4, floor=1e-8):
    """Max relative error per parameter between backprop and central differences.

    `loss_fn` must rebuild the loss graph from the parameters' current data
    on every call.  Returns {name: max_i |g_bp - g_fd| / max(|g_bp|, |g_fd|, floor)}.
    """
    if h <= 0:
        raise ConfigError(f"finite-difference step must be > 0, got {h}")
    named_params = list(named_params)
    for _, p in named_params:
        p.zero_grad()
    loss_fn().backward()
    analytic = {name: p.grad.copy() for name, p in named_params}

    errors = {}
    for name, p in named_params:
        flat = p.data.reshape(-1)
        an = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            f_plus = loss_fn().item()
            flat[i] = saved - h
            f_minus = loss_fn().item()
            flat[i] = saved
            fd = (f_plus - f_minus) / (2.0 * h)
            rel = abs(an[i] - fd) / max(abs(an[i]), abs(fd), floor)
            worst = max(worst, rel)
        errors[name] = worst
        p.zero_grad()
    return errors


def group_errors(per_param):
    """Collapse per-parameter errors to their dotted-path parameter groups."""
    groups = {}
    for name, err in per_param.items():
        group = name.rsplit(".", 1)[0] if "." in name else name
        groups[group] = max(groups.get(group, 0.0), err)
    return groups


def tiny_model_check(h=1e-4, seed=0):
    """Finite-difference check over every parameter of a small two-stage model.

    The residual gates start at zero, which would zero out all sub-layer
    gradients and make the check vacuous there, so they are set to random
    nonzero values first.  Returns {parameter name: max relative error}.
    """
    from . import engine
    from .model import ModelConfig, StageConfig, StageTimeModel
    from .slicing import SliceConfig

    with engine.default_dtype(np.float64):
        cfg = ModelConfig(
            stages=(
                StageConfig(SliceConfig(2, 2, 8), layers=1, reduction=2, heads=2),
                StageConfig(SliceConfig(2, 2, 8), layers=1, reduction=2, heads=2),
            ),
            in_channels=3,
            num_classes=3,
            seed=seed,
        )
        model = StageTimeModel(cfg)
        rng = np.random.default_rng(seed + 1)
        for name, p in model.named_parameters():
            if "alpha" in name:
                p.data = np.asarray(rng.uniform(0.3, 0.9))
        x = rng.standard_normal((2, 3, 32))
        y = rng.integers(0, 3, size=2)

        def loss_fn():
            return engine.cross_entropy(model.forward(x), y)

        return finite_difference_check(loss_fn, model.named_parameters(), h=h)
