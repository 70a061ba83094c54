"""Compiled vs fallback backend timing for the spectral recursion.

Usage: python benchmarks/bench_kernels.py [--T 131072] [--modes 256] [--repeats 3]

Runs the same seeded horizon through both backends (when the extension is
built), reports wall time, steps/second, and the max relative deviation
between the two checkpoint traces.
"""

import argparse
import time

import numpy as np

from kernelpath import _kernels
from kernelpath.online_learner import default_checkpoints, make_schedule, minimal_t0, run
from kernelpath.spectral_model import make_power_law_model


def time_run(model, schedule, T, backend, repeats, track):
    best = float("inf")
    trace = None
    for _ in range(repeats):
        start = time.perf_counter()
        trace = run(model, schedule, T=T, seed=7, backend=backend, track_decomposition=track)
        best = min(best, time.perf_counter() - start)
    return best, trace


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--T", type=int, default=131072)
    ap.add_argument("--modes", type=int, default=256)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--track", action="store_true", help="include decomposition tracking")
    args = ap.parse_args()

    model = make_power_law_model(modes=args.modes)
    a, theta = 4.0, 2.0 / 3.0
    t0 = minimal_t0(a, 1.0 / a, theta, model.kappa, r=1.0)
    schedule = make_schedule(a, 1.0 / a, theta, t0, r=1.0, kappa=model.kappa)
    print(f"T={args.T} modes={args.modes} checkpoints={default_checkpoints(args.T).size} "
          f"track={args.track}")

    results = {}
    for backend in ("fallback", "compiled"):
        if backend == "compiled" and _kernels.BACKEND != "compiled":
            print("compiled: extension not built, skipping")
            continue
        secs, trace = time_run(model, schedule, args.T, backend, args.repeats, args.track)
        results[backend] = (secs, trace)
        print(f"{backend:>9}: {secs:8.3f} s  ({args.T / secs:,.0f} steps/s)")

    if len(results) == 2:
        (_, fall), (_, comp) = results["fallback"], results["compiled"]
        dev = 0.0
        for name in ("err_rho", "err_K", "rem_rho", "rem_K", "fnorm_K"):
            x, y = getattr(fall, name), getattr(comp, name)
            scale = np.maximum(np.abs(x), 1e-300)
            dev = max(dev, float(np.max(np.abs(x - y) / scale)))
        speedup = results["fallback"][0] / results["compiled"][0]
        print(f"speedup: {speedup:.1f}x   max relative trace deviation: {dev:.3e}")


if __name__ == "__main__":
    main()
