"""Command-line front end.

Every command prints one JSON run report on standard output::

    {"schema_version": 1, "command": ..., "inputs": {...},
     "outputs": {...}, "exit_code": 0, "wall_time_ms": 12}

Exit codes: 0 success, 2 usage or validation error, 3 iteration budget
exhausted, 4 line-search failure, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__, kernels
from .certify import MAX_CHECK_ORDER, check_derivatives
from .matcore import EigenvalueError, Field, SingularTransformError
from .problems import (
    CollectionFileError,
    Ensemble,
    GeneratedProblem,
    as_collection,
    generate_jointly_diagonalizable,
    load,
    save,
)
from .solvers import Method, NotSelfAdjointError, SolverOptions, Termination, solve
from .wellposed import RankDeficientTarget, UnsupportedSizeError, divergence_probe, sylvester_discriminant

REPORT_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ITERS = 3
EXIT_LINE_SEARCH = 4
EXIT_NUMERIC = 5

_TERMINATION_EXIT = {
    Termination.GRAD_TOL: EXIT_OK,
    Termination.F_TOL: EXIT_OK,
    Termination.MAX_ITERS: EXIT_MAX_ITERS,
    Termination.LINE_SEARCH_FAILURE: EXIT_LINE_SEARCH,
}


class UsageError(Exception):
    """Bad flag values detected after argument parsing."""


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite nonnegative number, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite positive number, got {text}")
    return value


def _load_collection(path):
    return as_collection(load(path))


# --- commands --------------------------------------------------------------


def cmd_generate(args):
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    problem = generate_jointly_diagonalizable(
        args.n, args.k, args.noise, args.seed, Field(args.field), Ensemble(args.ensemble)
    )
    save(problem, args.out)
    return EXIT_OK, {"path": os.fspath(args.out), "n": args.n, "k": args.k, "field": args.field}


def _write_trace(path, result):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "f", "grad_norm"])
        for it, (f, g) in enumerate(zip(result.f_history, result.grad_norm_history)):
            writer.writerow([it, repr(float(f)), repr(float(g))])


def cmd_solve(args):
    loaded = load(args.input)
    collection = as_collection(loaded)
    if args.symmetrize:
        collection = collection.symmetrized()
    q0 = None
    if args.q0 is not None:
        q0 = _read_matrix_file(args.q0, collection.n)
    opts = SolverOptions(method=Method(args.method), max_iters=args.max_iters, grad_tol=args.grad_tol, seed=args.seed)
    result = solve(collection, q0, opts)
    if args.trace_out is not None:
        _write_trace(args.trace_out, result)
    out = result.to_dict()
    if isinstance(loaded, GeneratedProblem):
        from .matcore import offdiag_cost

        try:
            out["f_ground_truth"] = offdiag_cost(collection, loaded.ground_truth_q)
        except SingularTransformError:
            out["f_ground_truth"] = None
    return _TERMINATION_EXIT[result.termination], out


def _read_matrix_file(path, n):
    """A single n x n matrix stored as a one-matrix collection file."""
    coll = _load_collection(path)
    if coll.k != 1 or coll.n != n:
        raise UsageError(f"{path}: expected one {n}x{n} matrix, found k={coll.k}, n={coll.n}")
    return np.array(coll.matrices[0])


def cmd_check_derivatives(args):
    if not 1 <= args.order <= MAX_CHECK_ORDER:
        raise UsageError(f"--order must be in 1..{MAX_CHECK_ORDER}")
    collection = _load_collection(args.input)
    report = check_derivatives(collection, args.order, args.trials, args.seed)
    return (EXIT_OK if report.passed else EXIT_NUMERIC), report.to_dict()


def cmd_probe(args):
    collection = _load_collection(args.input)
    n = collection.n
    if not 1 <= args.rank <= n - 1:
        raise UsageError(f"--rank must be in [1, {n - 1}] for n={n}")
    kind, *rest = args.target
    if kind == "random" and not rest:
        target = RankDeficientTarget.random(n, args.rank, seed=args.seed, complex_=collection.field is Field.COMPLEX)
    elif kind == "file" and len(rest) == 1:
        try:
            target = RankDeficientTarget.from_matrix(_read_matrix_file(rest[0], n), rank=args.rank)
        except ValueError as exc:
            if isinstance(exc, CollectionFileError):
                raise
            raise UsageError(str(exc)) from None
    else:
        raise UsageError("--target must be 'random' or 'file PATH'")
    report = divergence_probe(collection, target, range(1, args.jmax + 1))
    out = report.to_dict()
    out["target"] = target.to_dict()
    return EXIT_OK, out


def cmd_discriminant(args):
    collection = _load_collection(args.input)
    if args.all:
        indices = list(range(collection.k))
    else:
        if not 0 <= args.index < collection.k:
            raise UsageError(f"--index {args.index} out of range for k={collection.k}")
        indices = [args.index]
    reports = []
    for i in indices:
        entry = sylvester_discriminant(collection.matrices[i]).to_dict()
        entry["index"] = i
        reports.append(entry)
    return EXIT_OK, {"reports": reports}


# --- parser and driver -----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointdiag", description="Approximate joint diagonalization toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a jointly diagonalizable problem with ground truth")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--noise", type=_nonneg_float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--field", choices=[f.value for f in Field], default="real")
    p.add_argument("--ensemble", choices=[e.value for e in Ensemble], default="general")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="minimize the off-diagonality of a collection file")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=[m.value for m in Method], default="newton")
    p.add_argument("--max-iters", type=_positive_int, default=SolverOptions.max_iters)
    p.add_argument("--grad-tol", type=_positive_float, default=SolverOptions.grad_tol)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q0", help="starting matrix, stored as a one-matrix collection file")
    p.add_argument("--trace-out", help="CSV trace with header iter,f,grad_norm")
    p.add_argument("--symmetrize", action="store_true", help="replace each A_k by (A_k + A_k^*)/2 first")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check-derivatives", help="certify the analytic derivatives numerically")
    p.add_argument("--input", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--trials", type=_positive_int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_derivatives)

    p = sub.add_parser("probe", help="evaluate f along a sequence tending to a rank-deficient target")
    p.add_argument("--input", required=True)
    p.add_argument("--rank", type=int, required=True)
    p.add_argument("--target", nargs="+", default=["random"], metavar="random|file PATH")
    p.add_argument("--jmax", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("discriminant", help="Sylvester-discriminant distinct-eigenvalue test")
    p.add_argument("--input", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--index", type=int)
    group.add_argument("--all", action="store_true")
    p.set_defaults(func=cmd_discriminant)
    return parser


def _finite(obj):
    """Replace non-finite floats by None so the report is strict JSON."""
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _inputs(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    start = time.perf_counter()
    try:
        code, outputs = args.func(args)
    except (UsageError, CollectionFileError, UnsupportedSizeError, NotSelfAdjointError, OSError) as exc:
        code, outputs = EXIT_USAGE, {"error": str(exc), "error_type": type(exc).__name__}
        if isinstance(exc, NotSelfAdjointError):
            outputs["index"] = exc.index
    except (SingularTransformError, EigenvalueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code, outputs = EXIT_NUMERIC, {"error": str(exc), "error_type": type(exc).__name__}
    except ValueError as exc:
        code, outputs = EXIT_USAGE, {"error": str(exc), "error_type": type(exc).__name__}
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": args.command,
        "inputs": _inputs(args),
        "outputs": outputs,
        "exit_code": code,
        "backend": kernels.BACKEND,
        "wall_time_ms": int(round(1000 * (time.perf_counter() - start))),
    }
    if "error" in outputs:
        print(f"jointdiag {args.command}: {outputs['error']}", file=sys.stderr)
    json.dump(_finite(report), sys.stdout, allow_nan=False)
    sys.stdout.write("\n")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
