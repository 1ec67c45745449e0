"""Time the hot kernels under both backends.

Run without arguments to get a comparison table: the script re-invokes
itself twice, once as-is and once with EHALLOC_NO_NUMBA=1, and prints
median wall times side by side.  The backend flag is read at import, so
the two runs must be separate processes.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 9
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np


def _median_time(fn, repeat):
    fn()  # warm up caches and, on the numba path, trigger compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def build_workloads():
    from ehalloc import _kernels
    from ehalloc.dp_causal import solve
    from ehalloc.oracle import GridSearchConfig, brute_force_fullsi
    from ehalloc.si_models import (
        AwgnProcess, DiscreteDist, IidProcess, Scenario, StochasticModel,
    )

    rng = np.random.default_rng(0)

    inv_batch = 1.0 / rng.uniform(0.1, 10.0, (2000, 16))
    budgets = rng.uniform(0.5, 8.0, 2000)

    def waterfill():
        for inv, p in zip(inv_batch, budgets):
            _kernels.wf_bisect(inv, p, 1e-9)

    scs = [Scenario(K=24, b1=float(rng.uniform(0.0, 2.0)), bmax=math.inf,
                    snr=tuple(rng.uniform(0.1, 10.0, 24)),
                    harvest=tuple(rng.uniform(0.0, 2.0, 23)))
           for _ in range(300)]

    def staircase():
        from ehalloc.fullsi import staircase_waterfill
        for sc in scs:
            staircase_waterfill(sc)

    sc_dp = Scenario(K=3, b1=1.5, bmax=math.inf, snr=(2.0, 0.5, 6.0),
                     harvest=(1.5, 1.0))
    cfg = GridSearchConfig(t_step=1e-3)

    def lattice_dp():
        brute_force_fullsi(sc_dp, cfg)

    mi = np.log1p(np.outer(rng.uniform(0.1, 10.0, 40), np.linspace(0, 4, 2000)))
    w = np.sqrt(np.linspace(0, 4, 2000))[None, :] * np.ones((40, 1))

    def tscan():
        for row in range(40):
            _kernels.tscan(mi[row], w[row])

    model = StochasticModel(
        snr=AwgnProcess(mean=100.0),
        harvest=IidProcess(dist=DiscreteDist.uniform((0.0, 0.5, 1.0))),
        b1=DiscreteDist.uniform((0.0, 0.5, 1.0)))

    def causal_solve():
        solve(model, K=4, delta_b=0.005)

    return {
        "waterfill x2000 (K=16)": waterfill,
        "staircase x300 (K=24)": staircase,
        "lattice dp (K=3, step 1e-3)": lattice_dp,
        "tscan 40x2000": tscan,
        "causal solve (K=4, step 5e-3)": causal_solve,
    }


def run_child(repeat):
    from ehalloc import _kernels

    results = {"backend": _kernels.BACKEND, "timings": {}}
    for name, fn in build_workloads().items():
        results["timings"][name] = _median_time(fn, repeat)
    print(json.dumps(results))


def run_parent(repeat):
    rows = {}
    for disable in ("0", "1"):
        env = dict(os.environ, EHALLOC_NO_NUMBA=disable)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child",
             "--repeat", str(repeat)],
            env=env, capture_output=True, text=True, check=True)
        data = json.loads(proc.stdout.strip().splitlines()[-1])
        rows[data["backend"]] = data["timings"]
    if set(rows) != {"numba", "numpy"}:
        print("warning: numba backend unavailable, showing numpy only")
        for name, t in next(iter(rows.values())).items():
            print(f"{name:34s} {t * 1e3:9.2f} ms")
        return
    width = max(len(n) for n in rows["numba"])
    print(f"{'workload':{width}s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for name in rows["numba"]:
        tb, tp = rows["numba"][name], rows["numpy"][name]
        print(f"{name:{width}s} {tb * 1e3:8.2f}ms {tp * 1e3:8.2f}ms "
              f"{tp / tb:7.1f}x")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5,
                    help="timed repetitions per workload (median is reported)")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        run_child(args.repeat)
    else:
        run_parent(args.repeat)


if __name__ == "__main__":
    main()
