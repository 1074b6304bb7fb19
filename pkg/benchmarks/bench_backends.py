"""Compare the numba and numpy kernel backends.

Each backend runs in its own subprocess with STAGETIME_BACKEND set before
import, so the jitted and plain paths are measured under identical
conditions.  Reported: the window gather/scatter kernels in isolation, the
fused optimizer update, and a full training step of a small model.

Usage: python benchmarks/bench_backends.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def worker(backend, repeat):
    os.environ["STAGETIME_BACKEND"] = backend
    import numpy as np

    from stagetime import backend as kernels
    from stagetime import engine
    from stagetime.data import batch_iter, synth_generate
    from stagetime.model import ModelConfig, StageConfig, StageTimeModel
    from stagetime.optim import Adam
    from stagetime.slicing import SliceConfig

    rng = np.random.default_rng(0)
    results = {"backend": kernels.BACKEND}

    def best_of(fn, warmups=2):
        for _ in range(warmups):
            fn()
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    x = rng.standard_normal((16, 512, 64)).astype(np.float32)
    size, stride, pad = 16, 8, 4
    n_out = (512 + 2 * pad - size) // stride + 1
    gy = rng.standard_normal((16, n_out, size * 64)).astype(np.float32)
    results["unfold_ms"] = 1e3 * best_of(lambda: kernels.unfold(x, size, stride, pad, n_out))
    results["fold_ms"] = 1e3 * best_of(lambda: kernels.fold(gy, 512, size, stride, pad))

    p = rng.standard_normal(262144).astype(np.float32)
    g = rng.standard_normal(262144).astype(np.float32)
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    results["adam_ms"] = 1e3 * best_of(
        lambda: kernels.adam_update(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
    )

    cfg = ModelConfig(
        stages=(
            StageConfig(SliceConfig(8, 4, 32), 2, 2, 4),
            StageConfig(SliceConfig(2, 2, 32), 2, 2, 4),
        ),
        in_channels=3,
        num_classes=2,
        seed=0,
    )
    model = StageTimeModel(cfg)
    opt = Adam(model.parameters())
    ds = synth_generate("longrange", 32, 3, 256, 2, seed=1)
    xb, yb = next(batch_iter(ds, 16))

    def step():
        loss = engine.cross_entropy(model.forward(xb), yb)
        loss.backward()
        opt.step()

    results["train_step_ms"] = 1e3 * best_of(step)
    print(json.dumps(results))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--worker", choices=("numba", "numpy"), help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.worker:
        worker(args.worker, args.repeat)
        return

    rows = []
    for backend in ("numpy", "numba"):
        env = dict(os.environ, STAGETIME_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker", backend, "--repeat", str(args.repeat)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr.strip()}")
            continue
        rows.append(json.loads(proc.stdout.strip().splitlines()[-1]))

    if not rows:
        return
    keys = ["unfold_ms", "fold_ms", "adam_ms", "train_step_ms"]
    header = f"{'kernel':<16}" + "".join(f"{r['backend']:>12}" for r in rows)
    if len(rows) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for key in keys:
        line = f"{key[:-3]:<16}" + "".join(f"{r[key]:>10.2f}ms" for r in rows)
        if len(rows) == 2 and rows[1][key] > 0:
            line += f"{rows[0][key] / rows[1][key]:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
