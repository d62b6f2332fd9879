"""Compiled vs pure backend timings on the default network.

Runs the hot paths under the active backend, then re-executes itself in
a subprocess with ROTACELL_PURE_KERNELS=1 to collect the pure-NumPy
numbers, and prints a side-by-side table.  Paths covered: channel
synthesis, channel+gradient evaluation, one max-min beamforming solve
(the conic engine's cone algebra), and one SCA surrogate pass.

Usage: python benchmarks/bench_kernels.py [--json] [--reps N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def timeit(fn, reps, warmup=2):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_benches(reps):
    from rotacell._kernels import BACKEND
    from rotacell.beamform import maxmin_beamforming
    from rotacell.channel import (
        channel_and_gradients,
        channel_matrix,
        default_orientations,
        precompute_paths,
    )
    from rotacell.orient_sca import run_sca
    from rotacell.scenario import default_config, scenario_from_seed

    cfg = default_config()
    cfg["p"] = 5.0
    scn = scenario_from_seed(cfg, seed=0)
    geom = precompute_paths(scn)
    orient = default_orientations(scn.num_aps, scn.elements_per_ap)
    h = channel_matrix(scn, orient, geom=geom)
    mm = maxmin_beamforming(h.h, scn.p_max, scn.noise_power, num_aps=scn.num_aps)

    results = {"backend": BACKEND}
    results["channel_matrix_ms"] = 1e3 * timeit(
        lambda: channel_matrix(scn, orient, geom=geom), reps * 20
    )
    results["channel_gradients_ms"] = 1e3 * timeit(
        lambda: channel_and_gradients(scn, orient, geom=geom), reps * 10
    )
    results["maxmin_solve_s"] = timeit(
        lambda: maxmin_beamforming(
            h.h, scn.p_max, scn.noise_power, num_aps=scn.num_aps
        ),
        max(reps // 2, 1),
    )
    results["sca_pass_s"] = timeit(
        lambda: run_sca(
            scn, mm.beamformers, orient, max_iter=3, adaptive=True,
            adaptive_start=1e-4, geom=geom,
        ),
        max(reps // 2, 1),
    )
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--json", action="store_true", help="emit one backend as JSON")
    ap.add_argument("--reps", type=int, default=6)
    args = ap.parse_args()

    mine = run_benches(args.reps)
    if args.json:
        print(json.dumps(mine))
        return

    if mine["backend"] != "compiled":
        print("compiled backend unavailable; timings below are pure-NumPy only")
        for key, val in mine.items():
            print(f"  {key}: {val}")
        return

    env = dict(os.environ, ROTACELL_PURE_KERNELS="1")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--json", "--reps", str(args.reps)],
        capture_output=True, text=True, env=env, check=True,
    )
    pure = json.loads(out.stdout.strip().splitlines()[-1])

    rows = [
        ("channel synthesis", "channel_matrix_ms", "ms"),
        ("channel + gradients", "channel_gradients_ms", "ms"),
        ("max-min beamforming", "maxmin_solve_s", "s"),
        ("SCA surrogate pass (3 iters)", "sca_pass_s", "s"),
    ]
    print(f"{'path':<30} {'compiled':>12} {'pure':>12} {'speedup':>9}")
    for label, key, unit in rows:
        c, p = mine[key], pure[key]
        print(f"{label:<30} {c:>10.3f} {unit:<2} {p:>10.3f} {unit:<2} {p / c:>7.2f}x")


if __name__ == "__main__":
    main()
