#!/usr/bin/env python3
"""Time the compiled path kernels against the pure-NumPy fallback.

Runs the same single-threaded coupled-walk ensemble through each available
backend and reports steps per second plus the compiled/python speedup.
"""

import argparse
import time

import numpy as np

from l0flow import TimeSchedule, make_flow, run_ensemble
from l0flow.kernels import available_backends


def build_case(model: str, d: int, steps: int):
    if model == "torus":
        fam = make_flow("torus", d, 1.0, L=1.0)
        pair = (fam.point(np.full(d, 0.15)), fam.point(np.full(d, 0.4)))
        t1p, t1pp, S = 0.3, 0.5, 0.08
    else:
        fam = make_flow("sphere", d, 0.2)
        p = np.zeros(d + 1)
        q = np.zeros(d + 1)
        p[0] = 1.0
        q[1] = 1.0
        pair = (fam.point(p), fam.point(q))
        t1p, t1pp, S = 0.18, 0.19, 0.15
    schedule = TimeSchedule(t1p, t1pp, S, np.sqrt(S / steps))
    return fam, schedule, pair


def time_backend(backend, fam, schedule, pair, n_paths, seed):
    # one tiny warm-up ensemble so imports and caches are off the clock
    run_ensemble(fam, schedule, pair, seed, 2, threads=1, backend=backend,
                 record="lambda")
    t0 = time.perf_counter()
    paths = run_ensemble(fam, schedule, pair, seed, n_paths, threads=1,
                         backend=backend, record="lambda")
    elapsed = time.perf_counter() - t0
    total_steps = sum(p.n_steps for p in paths)
    return elapsed, total_steps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", choices=("torus", "sphere"),
                        default="sphere")
    parser.add_argument("--d", type=int, default=2)
    parser.add_argument("--paths", type=int, default=200)
    parser.add_argument("--steps", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    fam, schedule, pair = build_case(args.model, args.d, args.steps)
    print(f"model={args.model} d={args.d} paths={args.paths} "
          f"steps/path={schedule.n_steps}")

    rates = {}
    for backend in available_backends():
        elapsed, total = time_backend(
            backend, fam, schedule, pair, args.paths, args.seed
        )
        rates[backend] = total / elapsed
        print(f"  {backend:10s} {elapsed:8.3f} s   {rates[backend]:12.0f} steps/s")

    if "compiled" in rates and "python" in rates:
        print(f"  speedup compiled/python: {rates['compiled'] / rates['python']:.1f}x")
    else:
        print("  (compiled backend unavailable; only the fallback was timed)")


if __name__ == "__main__":
    main()
