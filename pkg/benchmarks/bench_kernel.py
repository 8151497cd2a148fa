"""Timing comparison between the compiled kernel extension and the
pure-Python twin on the four hot paths.

Usage: python3 benchmarks/bench_kernel.py [--repeats N]
"""
import argparse
import time

import numpy as np

from deplocus import Box, build_model_system, kernel


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return sorted(times)[len(times) // 2]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    try:
        compiled = kernel.get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled extension not built; nothing to compare")
    pure = kernel.get_backend("pure")

    sys_ = build_model_system("sin(x2) + 0.25*x3^2", "x2*cos(x3)",
                              Box((-2, -2, -2), (2, 2, 2)))
    lo, hi = sys_.chart.lo_array(), sys_.chart.hi_array()
    rng = np.random.default_rng(0)

    grid = rng.uniform(-1.5, 1.5, size=(200_000, 3))
    delta_prog = sys_.dependence_function.program
    # bracket coefficient: a ~30-op program, representative of mesh scans
    field_prog = sys_.model_bracket_coefficient.program
    controls = rng.uniform(-1, 1, size=(50, 3))
    x0 = np.zeros(3)

    cases = [
        ("eval_batch (200k pts)",
         lambda be: kernel.eval_batch(field_prog, grid, backend=be)),
        ("rk4_endpoint (50x20 steps)",
         lambda be: kernel.rk4_endpoint(sys_.frame_bundle, x0, 0.0, 0.016,
                                        controls, 20, lo, hi, backend=be)),
        ("rk4_variational (50x20 steps)",
         lambda be: kernel.rk4_variational(sys_.frame_bundle, sys_.jac_bundle,
                                           x0, 0.0, 0.016, controls, 20, lo,
                                           hi, backend=be)),
        ("rk4_characteristic (1500 steps)",
         lambda be: kernel.rk4_characteristic(
             sys_.frame_bundle, sys_.grad_bundle, delta_prog, x0, 1e-3, 1500,
             1e-4, 1e-8, 1e-12, 0.0, 1e-10, lo, hi, backend=be)),
    ]

    print(f"{'path':<34} {'pure':>12} {'compiled':>12} {'speedup':>9}")
    for label, run in cases:
        tp = median_time(lambda: run(pure), args.repeats)
        tc = median_time(lambda: run(compiled), args.repeats)
        print(f"{label:<34} {tp * 1e3:>10.2f}ms {tc * 1e3:>10.2f}ms "
              f"{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
