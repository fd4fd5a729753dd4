"""Time the compiled and pure-numpy solver loops on the same problem.

    python3 benchmarks/bench_kernels.py --m 500 --n 50 --iters 20000
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from quantile_kaczmarz import kernels
from quantile_kaczmarz._accel import HAVE_NUMBA
from quantile_kaczmarz.corruption import CorruptionSpec, corrupt, generate_gaussian_system
from quantile_kaczmarz.solvers import SolverConfig, run_solver


def _time(system, cfg, loop, repeats):
    best = float("inf")
    trace = None
    for _ in range(repeats):
        start = time.perf_counter()
        trace = run_solver(system.A, system.b_observed, cfg, x_true=system.x_true, loop=loop)
        best = min(best, time.perf_counter() - start)
    return best, trace


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--iters", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    system = corrupt(generate_gaussian_system(args.m, args.n, args.seed),
                     CorruptionSpec(beta=0.1, model="random-gaussian", seed=args.seed))
    configs = [
        SolverConfig("uniform", max_iters=args.iters, seed=1),
        SolverConfig("quantile", q=0.7, max_iters=args.iters, seed=1),
        SolverConfig("sampled_quantile", q=0.7, t=max(2, args.m // 10), max_iters=args.iters, seed=1),
        SolverConfig("motzkin", max_iters=args.iters, seed=1),
        SolverConfig("powered", p=2.0, max_iters=args.iters, seed=1),
    ]
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy loop is timed")
    else:
        # compile (or load from cache) outside the timed region
        for cfg in configs:
            run_solver(system.A, system.b_observed, replace(cfg, max_iters=2),
                       loop=kernels.solve_loop_numba)

    print(f"m={args.m} n={args.n} iters={args.iters} (best of {args.repeats})")
    print(f"{'strategy':<36}{'numpy s':>10}{'numba s':>10}{'speedup':>9}  same picks")
    for cfg in configs:
        t_np, tr_np = _time(system, cfg, kernels.solve_loop_numpy, args.repeats)
        if HAVE_NUMBA:
            t_nb, tr_nb = _time(system, cfg, kernels.solve_loop_numba, args.repeats)
            same = np.array_equal(tr_np.picked_index, tr_nb.picked_index)
            print(f"{cfg.label():<36}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>9.1f}  {same}")
        else:
            print(f"{cfg.label():<36}{t_np:>10.3f}{'-':>10}{'-':>9}  -")


if __name__ == "__main__":
    main()
