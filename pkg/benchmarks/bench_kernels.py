"""Benchmark the compiled kernels against the pure-Python fallback.

Run from the repo root:

    python benchmarks/bench_kernels.py [--repeats N]

Reports per-call time for the per-tick hot operations and the speedup of the
compiled extension, plus a numerical agreement check between both paths.
"""

import argparse
import time

import numpy as np

from lbr_kit.kernels import _core, _pure
from lbr_kit.model import load_variant


def timeit(fn, repeats):
    # one warmup, then best-of-3 batches
    fn()
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(repeats):
            fn()
        best = min(best, (time.perf_counter() - start) / repeats)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    variant = load_variant("med7")
    rng = np.random.default_rng(5)
    q = rng.uniform(variant.limits_lo, variant.limits_hi)
    q_cmd = rng.uniform(variant.limits_lo, variant.limits_hi)
    inertia = np.ones(7)
    dt = 0.005
    lo, hi = variant.limits_lo, variant.limits_hi

    cases = {
        "fk_pose": lambda impl: impl.fk_pose(variant.axes, variant.origin_offsets, variant.flange_offset, q),
        "jacobian": lambda impl: impl.jacobian(variant.axes, variant.origin_offsets, variant.flange_offset, q),
        "position_step": lambda impl: impl.position_step(q, q_cmd, variant.velocity_limits, dt, lo, hi),
        "torque_rollout(2000)": lambda impl: impl.torque_rollout(
            q, np.zeros(7), q_cmd, variant.stiffness, variant.damping, inertia, dt, lo, hi, 2000
        ),
    }
    repeats = {"torque_rollout(2000)": max(args.repeats // 100, 5)}

    print(f"{'kernel':<22} {'pure':>12} {'cython':>12} {'speedup':>9}")
    for name, call in cases.items():
        n = repeats.get(name, args.repeats)
        t_pure = timeit(lambda: call(_pure), n)
        t_core = timeit(lambda: call(_core), n)
        print(f"{name:<22} {t_pure * 1e6:>10.1f}us {t_core * 1e6:>10.1f}us {t_pure / t_core:>8.1f}x")

    # agreement spot check
    p1, r1 = _pure.fk_pose(variant.axes, variant.origin_offsets, variant.flange_offset, q)
    p2, r2 = _core.fk_pose(variant.axes, variant.origin_offsets, variant.flange_offset, q)
    j1 = _pure.jacobian(variant.axes, variant.origin_offsets, variant.flange_offset, q)
    j2 = _core.jacobian(variant.axes, variant.origin_offsets, variant.flange_offset, q)
    dev = max(
        float(np.max(np.abs(p1 - p2))),
        float(np.max(np.abs(r1 - r2))),
        float(np.max(np.abs(j1 - j2))),
    )
    print(f"\nmax deviation pure vs cython: {dev:.2e}")


if __name__ == "__main__":
    main()
