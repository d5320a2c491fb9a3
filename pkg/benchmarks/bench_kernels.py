"""Time the compiled advance kernel against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --N 128 256 --steps 200
"""

import argparse
import time

import numpy as np

from pancake import kernels, resolve
from pancake.flow import FlowConfig, _call, _kernel_args
from pancake.geometry import angenent_oval, support_from_turning_angle


def time_advance(speed_id, N, steps, backend, pure, repeats):
    speed = resolve(speed_id, 2)
    cfg = FlowConfig(N=N, diff_backend=backend)
    args = _kernel_args(speed, cfg)
    fn, name = kernels.get_advance(backend, True, pure)
    s0 = support_from_turning_angle(angenent_oval(-2.0, N)).sigma
    best = np.inf
    for _ in range(repeats):
        s = s0.copy()
        t0 = time.perf_counter()
        _call(fn, name, s, 0.0, steps, np.nan, speed, cfg, args)
        best = min(best, time.perf_counter() - t0)
    return name, best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, nargs="+", default=[64, 128, 256, 512])
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--speeds", nargs="+", default=["mean", "pr:2"])
    p.add_argument("--backend", default="fd2", choices=["fd2", "fd4"])
    p.add_argument("--repeats", type=int, default=3)
    a = p.parse_args(argv)
    if not kernels.compiled_available():
        print("compiled kernel not built; only the fallback can be timed")
    print(f"{'speed':8s} {'N':>5s} {'compiled us/step':>17s} {'python us/step':>15s} {'speedup':>8s}")
    for sid in a.speeds:
        for N in a.N:
            py = time_advance(sid, N, a.steps, a.backend, True, a.repeats)[1]
            if kernels.compiled_available():
                cc = time_advance(sid, N, a.steps, a.backend, False, a.repeats)[1]
                print(f"{sid:8s} {N:5d} {1e6 * cc / a.steps:17.2f} {1e6 * py / a.steps:15.2f} {py / cc:8.1f}")
            else:
                print(f"{sid:8s} {N:5d} {'-':>17s} {1e6 * py / a.steps:15.2f} {'-':>8s}")


if __name__ == "__main__":
    main()
