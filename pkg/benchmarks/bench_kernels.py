#!/usr/bin/env python3
"""Benchmark the hot kernels under the numba JIT against the pure-numpy
fallback (selected by MODENS_NUMBA=0).

Run without arguments to execute both modes in child processes and print a
comparison table; run with --mode to time the current interpreter's mode
and emit one JSON line (used by the parent).
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def make_problem(n_points: int, m: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    fam = (rng.random(m) < 0.5).astype(np.int64)
    locs = rng.normal(0.0, 3.0, (n_points, m))
    scales = 0.2 + np.abs(rng.normal(0.0, 1.5, (n_points, m)))
    e = rng.uniform(0.2, 0.8, n_points)
    gamma = 5.0
    lowers = e + (1.0 - e) / gamma
    uppers = e + gamma * (1.0 - e)
    return fam, locs, scales, lowers, uppers


def time_case(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_mode(args) -> dict:
    from modens import NUMBA_ENABLED, modulated_intervals_batch
    from modens._kernels import mixture_quantile_k
    from modens.dist import pack_components
    from modens import ComponentDistribution, Family

    results = {"numba": NUMBA_ENABLED, "cases": {}}

    comps = [ComponentDistribution(Family.GAUSSIAN, float(i), 1.0 + 0.1 * i)
             for i in range(16)]
    fam1, loc1, sc1 = pack_components(comps)
    w1 = np.ones(16)
    mixture_quantile_k(fam1, loc1, sc1, w1, 1.0, 0.5, 1e-9)  # warm-up / compile

    def quantiles():
        for beta in np.linspace(0.01, 0.99, 200):
            mixture_quantile_k(fam1, loc1, sc1, w1, 1.0, float(beta), 1e-9)

    results["cases"]["mixture_quantile_x200"] = time_case(quantiles)

    for n_points in args.sizes:
        fam, locs, scales, lowers, uppers = make_problem(n_points, args.members)
        modulated_intervals_batch(fam, locs[:2], scales[:2], lowers[:2],
                                  uppers[:2], 0.05)  # warm-up

        def batch():
            modulated_intervals_batch(fam, locs, scales, lowers, uppers, 0.05)

        results["cases"][f"intervals_batch_n{n_points}_m{args.members}"] = \
            time_case(batch, repeats=2 if n_points >= 512 else 3)
    return results


def check_agreement() -> float:
    """Max |numba - numpy| endpoint difference on a shared problem."""
    fam, locs, scales, lowers, uppers = make_problem(64, 8, seed=3)
    payload = json.dumps({"fam": fam.tolist(), "locs": locs.tolist(),
                          "scales": scales.tolist(), "lowers": lowers.tolist(),
                          "uppers": uppers.tolist()})
    outs = {}
    for mode in ("1", "0"):
        env = dict(os.environ, MODENS_NUMBA=mode)
        proc = subprocess.run(
            [sys.executable, "-c",
             "import json, sys, numpy as np\n"
             "from modens import modulated_intervals_batch\n"
             "d = json.loads(sys.stdin.read())\n"
             "lo, hi = modulated_intervals_batch(np.array(d['fam'], dtype=np.int64),"
             " np.array(d['locs']), np.array(d['scales']), np.array(d['lowers']),"
             " np.array(d['uppers']), 0.05)\n"
             "print(json.dumps({'lo': lo.tolist(), 'hi': hi.tolist()}))"],
            input=payload, capture_output=True, text=True, env=env, check=True)
        outs[mode] = json.loads(proc.stdout)
    dlo = np.abs(np.array(outs["1"]["lo"]) - np.array(outs["0"]["lo"])).max()
    dhi = np.abs(np.array(outs["1"]["hi"]) - np.array(outs["0"]["hi"])).max()
    return float(max(dlo, dhi))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--mode", choices=("numba", "numpy"), default=None)
    parser.add_argument("--sizes", type=int, nargs="+", default=[64, 512])
    parser.add_argument("--members", type=int, default=16)
    parser.add_argument("--skip-agreement", action="store_true")
    args = parser.parse_args()

    if args.mode is not None:
        print(json.dumps(run_mode(args)))
        return 0

    rows = {}
    for mode, flag in (("numba", "1"), ("numpy", "0")):
        env = dict(os.environ, MODENS_NUMBA=flag)
        cmd = [sys.executable, __file__, "--mode", mode,
               "--members", str(args.members), "--sizes"] + \
              [str(s) for s in args.sizes]
        proc = subprocess.run(cmd, capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(proc.stderr, file=sys.stderr)
            return 1
        rows[mode] = json.loads(proc.stdout.strip().splitlines()[-1])

    cases = rows["numba"]["cases"]
    print(f"{'case':<34} {'numba (s)':>12} {'numpy (s)':>12} {'speedup':>9}")
    for case in cases:
        t_jit = rows["numba"]["cases"][case]
        t_py = rows["numpy"]["cases"][case]
        print(f"{case:<34} {t_jit:>12.4f} {t_py:>12.4f} {t_py / t_jit:>8.1f}x")
    if not args.skip_agreement:
        dev = check_agreement()
        print(f"\nmax endpoint disagreement between modes: {dev:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
