"""Descent solvers for the off-diagonality functional.

Two methods work on the general linear group (gradient descent and
matrix-free Newton-CG); both rescale every iterate to unit Frobenius norm,
which leaves f unchanged because f(cQ) = f(Q). A third method descends on the
unitary group for self-adjoint collections, retracting each step to the
closest unitary matrix.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .calculus import gradient_via_base_change, hessian_apply
from .matcore import (
    MatrixCollection,
    SingularTransformError,
    TransformPoint,
    _as_point,
    offdiag_cost,
    real_inner,
)

__all__ = [
    "Method",
    "Termination",
    "SolverOptions",
    "SolverResult",
    "NotSelfAdjointError",
    "gradient_descent",
    "newton_cg",
    "unitary_descent",
    "unitary_gradient",
    "closest_unitary",
    "solve",
]

log = logging.getLogger(__name__)

SELF_ADJOINT_RTOL = 1e-12
UNITARY_TOL = 1e-10


class Method(str, enum.Enum):
    GRADIENT_DESCENT = "gd"
    NEWTON_CG = "newton"
    UNITARY_DESCENT = "unitary"


class Termination(str, enum.Enum):
    GRAD_TOL = "GradTol"
    F_TOL = "FTol"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


class NotSelfAdjointError(ValueError):
    """Raised when the unitary method gets a non-self-adjoint matrix."""

    def __init__(self, index: int, defect: float):
        super().__init__(f"matrix {index} is not self-adjoint (relative defect {defect:.3e})")
        self.index = index
        self.defect = defect


@dataclass
class SolverOptions:
    method: Method = Method.GRADIENT_DESCENT
    max_iters: int = 5000
    grad_tol: float = 1e-9
    f_tol: float = 1e-14
    ls_shrink: float = 0.5
    ls_armijo: float = 1e-4
    ls_max_halvings: int = 60
    cg_max_iters: int = 50
    cg_tol: float = 1e-6
    damping: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        self.method = Method(self.method)
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")
        if not 0 < self.ls_armijo < 0.5:
            raise ValueError("ls_armijo must lie in (0, 0.5)")
        if self.max_iters < 0 or self.cg_max_iters < 1:
            raise ValueError("iteration limits must be positive")
        if self.grad_tol <= 0 or self.f_tol <= 0 or self.cg_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")


@dataclass
class SolverResult:
    q_final: TransformPoint
    f_history: list[float]
    grad_norm_history: list[float]
    iterations: int
    termination: Termination
    step_sizes: list[float] = field(default_factory=list)
    rcond_history: list[float] = field(default_factory=list)
    hessian_calls: list[int] = field(default_factory=list)
    cg_relative_residuals: list[float] = field(default_factory=list)

    @property
    def f_final(self) -> float:
        return self.f_history[-1]

    def to_dict(self) -> dict:
        from .problems import encode_matrix

        return {
            "q_final": encode_matrix(self.q_final.q),
            "f_final": self.f_final,
            "f_history": list(self.f_history),
            "grad_norm_history": list(self.grad_norm_history),
            "iterations": self.iterations,
            "termination": self.termination.value,
        }


def _normalize(q):
    return q / np.linalg.norm(q)


def _try_point(q):
    try:
        return TransformPoint.from_matrix(q)
    except SingularTransformError:
        return None


def _armijo(fun, x, f0, slope, direction, lam, opts, make_point):
    """Backtrack from ``lam`` until ``fun(x + lam d) <= f0 + c lam slope``.

    Returns ``(point, f_new, lam)`` or ``None`` after ``ls_max_halvings``
    reductions.
    """
    for _ in range(opts.ls_max_halvings + 1):
        cand = make_point(x + lam * direction)
        if cand is not None:
            f_new = fun(cand)
            if f_new <= f0 + opts.ls_armijo * lam * slope and f_new < f0:
                return cand, f_new, lam
        lam *= opts.ls_shrink
    return None


def _check_stop(f_hist, gnorm, it, opts):
    if gnorm <= opts.grad_tol:
        return Termination.GRAD_TOL
    if len(f_hist) >= 2 and f_hist[-2] - f_hist[-1] <= opts.f_tol * f_hist[-2]:
        return Termination.F_TOL
    if it >= opts.max_iters:
        return Termination.MAX_ITERS
    return None


def _roundoff_floor(collection, rcond):
    """Size of f that is indistinguishable from zero at working precision."""
    eps = np.finfo(np.float64).eps
    norms = np.linalg.norm(collection.matrices, axis=(1, 2))
    return 0.5 * float(np.sum((collection.n * eps * norms / rcond) ** 2))


def _ls_failure(collection, f, rcond):
    if f <= _roundoff_floor(collection, rcond):
        return Termination.F_TOL
    return Termination.LINE_SEARCH_FAILURE


def _gl_point(q):
    return _try_point(_normalize(q))


def gradient_descent(collection: MatrixCollection, q0, opts: SolverOptions | None = None, callback=None) -> SolverResult:
    """Normalized gradient descent with Armijo backtracking on GL(n).

    Each step starts from ``1 / (1 + ||grad||)`` and accepts the first
    trial with ``f(Q - t g) <= f(Q) - c t ||g||^2``.
    """
    opts = opts or SolverOptions()
    point = _as_point(q0)
    point = TransformPoint.from_matrix(_normalize(point.q))
    fun = lambda p: offdiag_cost(collection, p)  # noqa: E731
    res = SolverResult(point, [], [], 0, Termination.MAX_ITERS)
    f = fun(point)
    it = 0
    while True:
        g = gradient_via_base_change(collection, point)
        gnorm = float(np.linalg.norm(g))
        res.f_history.append(f)
        res.grad_norm_history.append(gnorm)
        res.rcond_history.append(point.rcond)
        if callback is not None:
            callback(point.q, f, gnorm)
        stop = _check_stop(res.f_history, gnorm, it, opts)
        if stop is not None:
            break
        found = _armijo(fun, point.q, f, -gnorm**2, -g, 1.0 / (1.0 + gnorm), opts, _gl_point)
        if found is None:
            stop = _ls_failure(collection, f, point.rcond)
            break
        point, f, lam = found
        res.step_sizes.append(lam)
        it += 1
    res.q_final = point
    res.iterations = it
    res.termination = stop
    return res


def _project_radial(x, q, qq):
    return x - (real_inner(x, q) / qq) * q


def _cg(hess, g, q, mu, opts):
    """Conjugate gradients for ``(P H P + mu I) z = -g`` on the complement of Q.

    Inner products are ``Re<., .>`` so complex matrices are handled as real
    vectors. Returns ``(z, n_hessian_calls, relative_residual, converged)``.
    """
    qq = real_inner(q, q)
    b = -_project_radial(g, q, qq)
    bnorm = np.sqrt(real_inner(b, b))
    z = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = real_inner(r, r)
    calls = 0
    for i in range(opts.cg_max_iters):
        Ap = _project_radial(hess(p), q, qq) + mu * p
        calls += 1
        curv = real_inner(p, Ap)
        if curv <= 0:
            if i == 0:
                return b, calls, 1.0, False
            break
        alpha = rr / curv
        z = z + alpha * p
        r = r - alpha * Ap
        rr_new = real_inner(r, r)
        if np.sqrt(rr_new) <= opts.cg_tol * bnorm:
            return _project_radial(z, q, qq), calls, np.sqrt(rr_new) / bnorm, True
        p = r + (rr_new / rr) * p
        rr = rr_new
    return _project_radial(z, q, qq), calls, np.sqrt(rr) / bnorm, False


def newton_cg(collection: MatrixCollection, q0, opts: SolverOptions | None = None, callback=None) -> SolverResult:
    """Damped Newton-CG on GL(n) using only Hessian-vector products.

    The Newton system is solved on the real orthogonal complement of Q
    (the Hessian is singular along the ray through Q). Damping is
    ``damping * (1 + ||g||)``; the damping factor halves after an accepted
    step and triples after a failed line search.
    """
    opts = opts or SolverOptions(method=Method.NEWTON_CG)
    point = TransformPoint.from_matrix(_normalize(_as_point(q0).q))
    fun = lambda p: offdiag_cost(collection, p)  # noqa: E731
    res = SolverResult(point, [], [], 0, Termination.MAX_ITERS)
    damping = opts.damping
    f = fun(point)
    it = 0
    while True:
        g = gradient_via_base_change(collection, point)
        gnorm = float(np.linalg.norm(g))
        res.f_history.append(f)
        res.grad_norm_history.append(gnorm)
        res.rcond_history.append(point.rcond)
        if callback is not None:
            callback(point.q, f, gnorm)
        stop = _check_stop(res.f_history, gnorm, it, opts)
        if stop is not None:
            break
        hess = lambda z, _p=point: hessian_apply(collection, _p, z)  # noqa: E731
        found = None
        for _ in range(8):
            mu = damping * (1.0 + gnorm)
            z, calls, relres, _ = _cg(hess, g, point.q, mu, opts)
            res.hessian_calls.append(calls)
            res.cg_relative_residuals.append(relres)
            slope = real_inner(g, z)
            if not slope < 0:
                z = -g
                slope = -(gnorm**2)
            found = _armijo(fun, point.q, f, slope, z, 1.0, opts, _gl_point)
            if found is not None:
                damping *= 0.5
                break
            damping = max(3.0 * damping, 1e-8)
        if found is None:
            found = _armijo(fun, point.q, f, -(gnorm**2), -g, 1.0 / (1.0 + gnorm), opts, _gl_point)
        if found is None:
            stop = _ls_failure(collection, f, point.rcond)
            break
        point, f, lam = found
        res.step_sizes.append(lam)
        it += 1
    res.q_final = point
    res.iterations = it
    res.termination = stop
    return res


def closest_unitary(q) -> np.ndarray:
    """Closest unitary matrix in Frobenius norm: ``U V^*`` from ``Q = U S V^*``."""
    q = np.asarray(q)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {q.shape}")
    u, s, vh = np.linalg.svd(q)
    if not s[-1] > 1e3 * q.shape[0] * np.finfo(float).eps * s[0]:
        raise SingularTransformError("closest_unitary needs an invertible matrix")
    return u @ vh


def _unitary_defect(q):
    return float(np.linalg.norm(q.conj().T @ q - np.eye(q.shape[0])))


class _UnitaryPoint:
    """Unitary iterate; ``Q^{-1}`` is ``Q^*`` so no factorization is needed."""

    __slots__ = ("q",)

    def __init__(self, q):
        self.q = q

    def transformed(self, collection):
        D = self.q.conj().T @ collection.matrices @ self.q
        # Hermitian in exact arithmetic; enforce it so the bracket is skew
        return 0.5 * (D + np.conj(np.swapaxes(D, 1, 2)))


def _unitary_cost(collection, point):
    return 0.5 * kernels.offdiag_sumsq(point.transformed(collection))


def _unitary_gradient(collection, point):
    return point.q @ kernels.bracket_sum(point.transformed(collection))


def unitary_gradient(collection: MatrixCollection, q) -> np.ndarray:
    """Gradient of f restricted to unitary Q, as used by :func:`unitary_descent`.

    ``Q sum_k [D_k^*, J o D_k]`` with ``D_k`` the Hermitian part of
    ``Q^* A_k Q``; ``Q^*`` times the result is skew-adjoint.
    """
    q = q.q if isinstance(q, TransformPoint) else np.asarray(q)
    return _unitary_gradient(collection, _UnitaryPoint(q))


def unitary_descent(collection: MatrixCollection, q0, opts: SolverOptions | None = None, callback=None) -> SolverResult:
    """Gradient descent on the unitary group for self-adjoint collections.

    Iterates ``Q <- R(Q - t grad g)`` where ``R`` is :func:`closest_unitary`
    and ``grad g = Q sum_k [D_k^*, J o D_k]`` with ``D_k = Q^* A_k Q``.
    """
    opts = opts or SolverOptions(method=Method.UNITARY_DESCENT)
    for k, a in enumerate(collection.matrices):
        scale = np.linalg.norm(a)
        defect = float(np.linalg.norm(a - a.conj().T))
        if defect > SELF_ADJOINT_RTOL * scale:
            raise NotSelfAdjointError(k, defect / scale if scale else np.inf)
    q = q0.q if isinstance(q0, TransformPoint) else np.asarray(q0)
    q = np.array(q, dtype=np.result_type(q, collection.matrices))
    if q.shape != (collection.n, collection.n):
        raise ValueError(f"q0 has shape {q.shape}, expected {(collection.n,) * 2}")
    if _unitary_defect(q) > UNITARY_TOL:
        warnings.warn("q0 is not unitary; replacing it by its closest unitary matrix", stacklevel=2)
        q = closest_unitary(q)
    point = _UnitaryPoint(q)
    fun = lambda p: _unitary_cost(collection, p)  # noqa: E731

    def make_point(x):
        try:
            return _UnitaryPoint(closest_unitary(x))
        except SingularTransformError:
            return None

    f = fun(point)
    f_hist, g_hist, steps, rconds = [], [], [], []
    it = 0
    while True:
        grad = _unitary_gradient(collection, point)
        gnorm = float(np.linalg.norm(grad))
        tangent = point.q.conj().T @ grad
        skew_defect = float(np.linalg.norm(tangent + tangent.conj().T))
        if skew_defect > UNITARY_TOL * max(gnorm, 1e-300):
            raise ArithmeticError("unitary gradient left the tangent space")
        f_hist.append(f)
        g_hist.append(gnorm)
        rconds.append(1.0)
        if callback is not None:
            callback(point.q, f, gnorm)
        stop = _check_stop(f_hist, gnorm, it, opts)
        if stop is not None:
            break
        found = _armijo(fun, point.q, f, -gnorm**2, -grad, 1.0 / (1.0 + gnorm), opts, make_point)
        if found is None:
            stop = _ls_failure(collection, f, 1.0)
            break
        point, f, lam = found
        steps.append(lam)
        it += 1
    return SolverResult(
        q_final=TransformPoint.from_matrix(point.q),
        f_history=f_hist,
        grad_norm_history=g_hist,
        iterations=it,
        termination=stop,
        step_sizes=steps,
        rcond_history=rconds,
    )


def solve(collection: MatrixCollection, q0=None, opts: SolverOptions | None = None, callback=None) -> SolverResult:
    """Dispatch on ``opts.method``; ``q0`` defaults to the identity.

    ``callback(q, f, grad_norm)``, if given, is called at every iterate
    including the starting point.
    """
    opts = opts or SolverOptions()
    if q0 is None:
        q0 = np.eye(collection.n, dtype=collection.field.dtype)
    if opts.method is Method.GRADIENT_DESCENT:
        return gradient_descent(collection, q0, opts, callback)
    if opts.method is Method.NEWTON_CG:
        return newton_cg(collection, q0, opts, callback)
    return unitary_descent(collection, q0, opts, callback)
