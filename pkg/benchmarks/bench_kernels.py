"""Compiled kernels vs the numpy fallback, per kernel and for a full training step.

    python3 benchmarks/bench_kernels.py [--batch 256] [--hidden 256] [--repeat 20]
"""

import argparse
import timeit

import numpy as np

from situnet.numerics import _kernels_py, ops
from situnet.numerics._backend import COMPILED, kernels


def kernel_cases(B, D, rng):
    rows = B * 7
    z, h, c, g = (rng.random((rows, D)) for _ in range(4))
    msgs, g3 = rng.standard_normal((B, 7, D)), rng.standard_normal((B, 7, D))
    adj = (rng.random((B, 7, 7)) < 0.5).astype(np.float64)
    v = rng.standard_normal((rows, D))
    out2, out3 = np.empty((rows, D)), np.empty((B, 7, D))
    d1, d2, d3 = (np.empty((rows, D)) for _ in range(3))
    norms = np.empty(rows)
    return {
        "gru_combine": lambda k: k.gru_combine(z, h, c, out2),
        "gru_combine_backward": lambda k: k.gru_combine_backward(g, z, h, c, d1, d2, d3),
        "aggregate": lambda k: k.aggregate(msgs, adj, out3),
        "aggregate_backward": lambda k: k.aggregate_backward(g3, adj, out3),
        "normalize_rows": lambda k: k.normalize_rows(v, 1e-12, out2, norms),
        "normalize_rows_backward": lambda k: k.normalize_rows_backward(g, out2, norms, 1e-12, d1),
    }


def train_step(B, D):
    from situnet.synthetic import SyntheticConfig, generate_synthetic
    from situnet.topology import TopologyCache
    from situnet.training import TrainConfig, compute_loss_and_grads
    from situnet.model import ModelParams

    onto, data, _ = generate_synthetic(SyntheticConfig(n_train=B, n_dev=0), 0)
    params = ModelParams.initialize(onto, len(data[0].phi_v), len(data[0].phi_n), D)
    cfg = TrainConfig(hidden=D, steps=4)
    cache = TopologyCache(onto)
    return lambda: compute_loss_and_grads(params, data, cfg, cache)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--hidden", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not COMPILED:
        print("compiled kernels are not built; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'numpy ms':>10}{'compiled ms':>13}{'speedup':>9}")
    for name, fn in kernel_cases(args.batch, args.hidden, rng).items():
        py = best_of(lambda: fn(_kernels_py), args.repeat)
        cy = best_of(lambda: fn(kernels), args.repeat) if COMPILED else float("nan")
        print(f"{name:<26}{1e3 * py:>10.3f}{1e3 * cy:>13.3f}{py / cy:>9.2f}")
    step = train_step(args.batch, args.hidden)
    times = {}
    for label, module in (("numpy", _kernels_py), ("compiled", kernels)):
        prev = ops.use_kernels(module)
        try:
            times[label] = best_of(step, max(3, args.repeat // 5))
        finally:
            ops.use_kernels(prev)
    print(f"{'loss+grad step (T=4)':<26}{1e3 * times['numpy']:>10.1f}"
          f"{1e3 * times['compiled']:>13.1f}{times['numpy'] / times['compiled']:>9.2f}")


if __name__ == "__main__":
    main()
