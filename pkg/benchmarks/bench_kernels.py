#!/usr/bin/env python3
"""Time the hot kernels in both lanes (numpy fallback vs numba @njit).

Informs the per-kernel defaults in greybox_ot.accel: the simulators are
loop-bound and benefit from numba, while the fused rollout is dominated by
BLAS matmuls and libm tanh, where the numpy lane's vectorized
transcendentals win.  Run:

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from greybox_ot import accel


def timeit(fn, repeat):
    fn()  # warm (and jit-compile on the numba lane)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(rng):
    B = 64
    s0 = np.column_stack([rng.uniform(-1.5, 1.5, B), np.zeros(B)])
    omega = rng.uniform(0.785, 3.14, B)
    xi = np.full(B, 1.2)

    T0 = rng.uniform(0.0, 1.0, size=(B, 20))
    T0[:, 0] = T0[:, -1] = 0.0
    alpha = rng.uniform(0.01, 0.1, B)
    beta = np.full(B, 0.1)

    uv0 = rng.uniform(-0.1, 0.1, size=(8, 2, 16, 16))
    ab = rng.uniform(1e-3, 5e-3, 8)

    E, H = 8, 64
    emb = rng.normal(size=(B, E)) * 0.3
    z = np.zeros((B, 0))
    W = (rng.normal(size=(4 + E, H)) * 0.2, np.zeros(H),
         rng.normal(size=(H + E, H)) * 0.2, np.zeros(H),
         rng.normal(size=(H, 1)) * 0.05, np.zeros(1))

    def rollout_fwd(k):
        return lambda: k.pendulum_rollout_fwd(s0, omega, emb, z, *W, 0.1, 500, 10)

    def rollout_bwd(k):
        traj, store = k.pendulum_rollout_fwd(s0, omega, emb, z, *W, 0.1, 500, 10)
        g = np.ones_like(traj)
        return lambda: k.pendulum_rollout_bwd(g, store, omega, emb, z, *W, 0.1, 10)

    return [
        ("pendulum_sim (B=64, 500 steps)",
         lambda k: (lambda: k.pendulum_sim(s0, omega, xi, 0.1, 500, 10))),
        ("advdiff_sim (B=64, 50 steps)",
         lambda k: (lambda: k.advdiff_sim(T0, alpha, beta, 90.25, 9.5, 0.02,
                                          50, 1, False))),
        ("reactdiff_sim (B=8, 60 steps)",
         lambda k: (lambda: k.reactdiff_sim(uv0, ab, ab, ab * 0.0, 256.0, 0.2,
                                            60, 5))),
        ("pendulum_rollout_fwd (B=64)", rollout_fwd),
        ("pendulum_rollout_bwd (B=64)", rollout_bwd),
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    lanes = accel.available_lanes()
    print(f"lanes: {', '.join(lanes)}")
    if "numba" in lanes:
        print("compiling numba kernels (cached after the first run) ...")
        accel.warmup("numba")
    header = f"{'kernel':<34}" + "".join(f"{lane:>12}" for lane in lanes)
    if len(lanes) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, make in build_cases(rng):
        times = []
        for lane in lanes:
            k = accel.kernels(lane)
            times.append(timeit(make(k), args.repeat))
        row = f"{name:<34}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.2f}x"
        print(row)
    print("\nspeedup = numpy time / numba time (>1 means numba wins)")


if __name__ == "__main__":
    main()
