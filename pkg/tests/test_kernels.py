import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import gaussian
from jointdiag import kernels

needs_numba = pytest.mark.skipif(kernels.numba_backend is None, reason="numba not installed")
seeds = st.integers(0, 2**32 - 1)


def _both(name, *args):
    ref = getattr(kernels.numpy_backend, name)(*args)
    got = getattr(kernels.numba_backend, name)(*args)
    return np.asarray(ref), np.asarray(got)


@needs_numba
@given(seeds, st.integers(1, 9), st.integers(1, 4), st.booleans())
def test_backends_agree(seed, n, k, cplx):
    r = np.random.default_rng(seed)
    D = np.ascontiguousarray(gaussian(r, (k, n, n), cplx))
    W = np.ascontiguousarray(gaussian(r, (n, n), cplx))
    for name, args in [
        ("offdiag_sumsq", (D,)),
        ("bracket_sum", (D,)),
        ("hessian_core", (D, W)),
        ("d1_form", (D, W)),
        ("d2_form", (D, W)),
        ("faddeev_leverrier", (np.ascontiguousarray(D[0]),)),
    ]:
        ref, got = _both(name, *args)
        scale = max(1.0, float(np.max(np.abs(ref))))
        np.testing.assert_allclose(got, ref, rtol=1e-11, atol=1e-11 * scale, err_msg=name)


def test_numpy_kernels_against_definitions(rng):
    D = gaussian(rng, (3, 4, 4), cplx=True)
    W = gaussian(rng, (4, 4), cplx=True)
    nb = kernels.numpy_backend
    mask = 1 - np.eye(4)
    assert nb.offdiag_sumsq(D) == pytest.approx(sum(np.sum(np.abs(d * mask) ** 2) for d in D), rel=1e-14)
    ref = sum(d.conj().T @ (d * mask) - (d * mask) @ d.conj().T for d in D)
    np.testing.assert_allclose(nb.bracket_sum(D), ref, atol=1e-12)
    ref1 = sum(np.real(np.vdot(d * mask, d @ W - W @ d)) for d in D)
    assert nb.d1_form(D, W) == pytest.approx(ref1, rel=1e-12)


def test_faddeev_leverrier_matches_poly(rng):
    a = gaussian(rng, (5, 5))
    np.testing.assert_allclose(kernels.faddeev_leverrier(a)[::-1], np.poly(a), rtol=1e-10, atol=1e-10)


def test_kernels_dispatch_casts_mixed_dtypes(rng):
    D = gaussian(rng, (2, 3, 3))
    W = gaussian(rng, (3, 3), cplx=True)
    out = kernels.hessian_core(D, W)
    assert out.dtype == np.complex128


def test_get_backend_names():
    assert kernels.get_backend("numpy") is kernels.numpy_backend
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def _backend_in_subprocess(value):
    env = dict(os.environ, JOINTDIAG_BACKEND=value)
    return subprocess.run(
        [sys.executable, "-c", "from jointdiag import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
    )


def test_env_flag_selects_numpy():
    res = _backend_in_subprocess("numpy")
    assert res.returncode == 0 and res.stdout.strip() == "numpy"


@needs_numba
def test_env_flag_selects_numba():
    res = _backend_in_subprocess("numba")
    assert res.returncode == 0 and res.stdout.strip() == "numba"


def test_env_flag_rejects_unknown():
    res = _backend_in_subprocess("cuda")
    assert res.returncode != 0 and "JOINTDIAG_BACKEND" in res.stderr


@needs_numba
def test_solver_trace_identical_across_backends():
    code = (
        "from jointdiag.problems import generate_jointly_diagonalizable as g;"
        "from jointdiag.solvers import solve, SolverOptions;"
        "r = solve(g(3, 2, 0.0, seed=5).collection, opts=SolverOptions(method='newton'));"
        "print(r.iterations, r.termination.value, '%.6e' % r.f_history[1])"
    )
    outs = []
    for value in ("numpy", "numba"):
        env = dict(os.environ, JOINTDIAG_BACKEND=value)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs.append(res.stdout.split())
    # same path to the minimum; later iterates may differ by rounding
    assert outs[0][1] == outs[1][1]
    assert outs[0][2] == outs[1][2]
