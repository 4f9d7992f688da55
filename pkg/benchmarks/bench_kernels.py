"""Time the numba kernels against their fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per backend to warm up (numba compiles on first call),
then ``--repeat`` times; the best wall time is reported.
"""

import argparse
import json
import time

import numpy as np

from cuniform import _accel, kernels
from cuniform.config import ExperimentConfig
from cuniform.levelsets import expand_level
from cuniform.uniformflow import build_flow_network, precompute


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    cfg = ExperimentConfig()
    pol = precompute(cfg.model, cfg.grid, cfg.x0, cfg.actions, 8, cfg.dt)
    L = pol.levels[7]
    Lp, tr = expand_level(cfg.model, cfg.grid, L, cfg.actions, 1, cfg.dt)
    net = build_flow_network(L, Lp, tr)
    cdf, succ, _ = pol.stacked()
    rng = np.random.default_rng(0)
    u = rng.random((10_000, 8))
    x0 = np.zeros((10_000, 3))
    om = rng.uniform(-1.5, 1.5, (10_000, 15))
    pos = kernels.dubins_rollout(x0, om, 2.0, 0.2)[..., :2]
    circles = np.array([[4.0, 0.2, 0.5], [2.0, -1.0, 0.3]])
    rects = np.array([[5.0, -3.0, 6.0, -1.0]])
    return {
        f"max_flow (level 7->8, {net.n_arcs} arcs)":
            lambda nb: kernels.max_flow_arrays(net.n_nodes, net.tail, net.head, net.cap, 0, net.sink, numba=nb),
        "cuniform_walk (K=10000, T=8)": lambda nb: kernels.cuniform_walk(cdf, succ, 0, u, numba=nb),
        "dubins_rollout (K=10000, T=15)": lambda nb: kernels.dubins_rollout(x0, om, 2.0, 0.2, numba=nb),
        "trajectory_costs (K=10000, T=15)":
            lambda nb: kernels.trajectory_costs(pos, [8.0, 0.0], circles, rects, 0.3, numba=nb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rows = []
    print(f"{'kernel':42s} {'numba ms':>10s} {'fallback ms':>12s} {'speedup':>8s}")
    for name, fn in cases().items():
        a = best_of(lambda: fn(True), args.repeat)
        b = best_of(lambda: fn(False), args.repeat)
        rows.append({"kernel": name, "numba_s": a, "fallback_s": b, "speedup": b / a})
        print(f"{name:42s} {a * 1e3:10.2f} {b * 1e3:12.2f} {b / a:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
