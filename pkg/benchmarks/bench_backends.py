#!/usr/bin/env python3
"""Benchmark the numba lane against the pure-numpy lane.

Times the three hot kernels on representative workloads:

* pair product-mass recursion (branch-and-bound over cell pairs)
* lazy walk operator iteration (sparse matvec chain)
* Monte Carlo exit-time walks

Usage: python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

import fractalbv as fb
from fractalbv import heat, kernels


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(quick: bool):
    sg = fb.build_preset("sierpinski", window_level=0)
    vs = fb.build_preset("vicsek", window_level=0)
    depth = 10 if quick else 12
    walk_N = 5 if quick else 7
    steps = 100 if quick else 400
    samples = 10**4 if quick else 10**5

    cases = {
        "pair_mass sg depth%d" % depth: lambda: fb.pair_mass(
            sg, sg.cell((1,)), sg.cell((2,)), 2.0**-4, depth_cap=depth
        ),
        "pair_mass vs depth%d" % (depth - 2): lambda: fb.pair_mass(
            vs, vs.cell((1,)), vs.cell((5,)), 3.0**-3, depth_cap=depth - 2
        ),
        "ball_mass sg depth%d" % depth: lambda: fb.ball_mass(
            sg, sg.center, 0.3, sg.cell(()), depth_cap=depth
        ),
    }

    results = {}
    for lane in ("numba", "numpy"):
        try:
            kernels.set_backend(lane)
        except Exception as e:  # numba unavailable
            print(f"lane {lane}: unavailable ({e})")
            continue
        lane_res = {}
        for name, fn in cases.items():
            fn()  # warm (JIT compile on the numba lane)
            lane_res[name] = _time(fn)

        walk = heat.build_walk(sg, walk_N)
        v = np.linspace(0.0, 1.0, walk.num_vertices)
        lane_res[f"walk {steps} steps N={walk_N}"] = _time(
            lambda: heat.apply_steps(walk, v, steps)
        )

        u = fb.CellUnion((sg.cell((2,)),))
        x = sg.cell_center(sg.cell((2,)))
        lane_res[f"mc exit {samples} walks"] = _time(
            lambda: heat.hitting_tail_mc(walk, u, x, [5.0**-2], samples=samples, seed=0),
            repeats=1,
        )
        results[lane] = lane_res
        kernels.set_backend(None)

    names = list(next(iter(results.values())))
    width = max(len(n) for n in names)
    print(f"\n{'kernel':<{width}}  {'numba':>10}  {'numpy':>10}  {'speedup':>8}")
    for n in names:
        tn = results.get("numba", {}).get(n, float("nan"))
        tp = results.get("numpy", {}).get(n, float("nan"))
        print(f"{n:<{width}}  {tn:>9.4f}s  {tp:>9.4f}s  {tp / tn:>7.1f}x")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    bench(ap.parse_args().quick)
