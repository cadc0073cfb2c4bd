"""Compare the numba and numpy kernel backends.

Runs every hot kernel on random (K, n, n) stacks, checks that both backends
agree, and reports the median wall time per call. Also times one full
Newton-CG solve per backend in a subprocess, since the backend is fixed at
import time.

    python3 benchmarks/bench_kernels.py [--sizes 4 8 16] [--k 3] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from jointdiag import kernels

CALLS = {
    "offdiag_sumsq": lambda be, D, W, A: be.offdiag_sumsq(D),
    "bracket_sum": lambda be, D, W, A: be.bracket_sum(D),
    "hessian_core": lambda be, D, W, A: be.hessian_core(D, W),
    "d1_form": lambda be, D, W, A: be.d1_form(D, W),
    "d2_form": lambda be, D, W, A: be.d2_form(D, W),
    "faddeev_leverrier": lambda be, D, W, A: be.faddeev_leverrier(A),
}

SOLVE_SNIPPET = """
import time
from jointdiag.problems import generate_jointly_diagonalizable
from jointdiag.solvers import SolverOptions, solve
p = generate_jointly_diagonalizable({n}, {k}, 0.0, seed=3)
solve(p.collection, opts=SolverOptions(method="newton", max_iters=3))  # warm-up / JIT
t = time.perf_counter()
r = solve(p.collection, opts=SolverOptions(method="newton"))
print(time.perf_counter() - t, r.iterations, r.f_final)
"""


def _median_time(fn, repeat=7):
    number, _ = timeit.Timer(fn).autorange()
    times = timeit.Timer(fn).repeat(repeat=repeat, number=number)
    return float(np.median(times)) / number


def bench_kernels(sizes, k, complex_, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        shape = (k, n, n)
        D = rng.standard_normal(shape)
        W = rng.standard_normal((n, n))
        if complex_:
            D = D + 1j * rng.standard_normal(shape)
            W = W + 1j * rng.standard_normal((n, n))
        A = D[0].copy()
        for name, call in CALLS.items():
            if name == "faddeev_leverrier" and n > 12:
                continue
            ref = call(kernels.numpy_backend, D, W, A)
            row = {"kernel": name, "n": n, "k": k, "complex": complex_}
            row["numpy_s"] = _median_time(lambda: call(kernels.numpy_backend, D, W, A))
            if kernels.numba_backend is not None:
                got = call(kernels.numba_backend, D, W, A)  # also triggers compilation
                row["max_abs_diff"] = float(np.max(np.abs(np.asarray(got) - np.asarray(ref))))
                row["numba_s"] = _median_time(lambda: call(kernels.numba_backend, D, W, A))
                row["speedup"] = row["numpy_s"] / row["numba_s"]
            rows.append(row)
    return rows


def bench_solve(n, k):
    out = {}
    for backend in ("numpy", "numba"):
        if backend == "numba" and kernels.numba_backend is None:
            continue
        env = dict(os.environ, JOINTDIAG_BACKEND=backend)
        res = subprocess.run(
            [sys.executable, "-c", SOLVE_SNIPPET.format(n=n, k=k)], env=env, capture_output=True, text=True, check=True
        )
        seconds, iters, f = res.stdout.split()
        out[backend] = {"seconds": float(seconds), "iterations": int(iters), "f_final": float(f)}
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[3, 6, 12, 24])
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--solve-n", type=int, default=6)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)

    rows = bench_kernels(args.sizes, args.k, False) + bench_kernels(args.sizes, args.k, True)
    print(f"{'kernel':<18}{'n':>4}{'cplx':>6}{'numpy us':>11}{'numba us':>11}{'speedup':>9}{'max diff':>11}")
    for r in rows:
        numba_us = f"{1e6 * r['numba_s']:11.2f}" if "numba_s" in r else f"{'-':>11}"
        speed = f"{r['speedup']:9.2f}" if "speedup" in r else f"{'-':>9}"
        diff = f"{r['max_abs_diff']:11.1e}" if "max_abs_diff" in r else f"{'-':>11}"
        print(f"{r['kernel']:<18}{r['n']:>4}{str(r['complex'])[0]:>6}{1e6 * r['numpy_s']:11.2f}{numba_us}{speed}{diff}")

    solve = bench_solve(args.solve_n, args.k)
    print(f"\nNewton-CG solve, n={args.solve_n}, K={args.k}:")
    for backend, res in solve.items():
        print(f"  {backend:<6} {res['seconds']:.3f} s  iterations={res['iterations']}  f={res['f_final']:.2e}")

    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"kernels": rows, "solve": solve}, fh, indent=1)


if __name__ == "__main__":
    main()
