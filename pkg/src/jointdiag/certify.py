"""Numerical certification of the analytic derivatives.

Finite differences check the gradient and the second differential; the
higher differentials are certified by the slope of the Taylor remainder

    R_j(t) = | f(Q + tZ) - sum_{i<=j} t^i / i! d^i f(Z) |,

which must decay like ``t^{j+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .calculus import gradient, hessian_apply, jth_differential_f, second_differential_f
from .matcore import (
    Field,
    MatrixCollection,
    SingularTransformError,
    TransformPoint,
    offdiag_cost,
    real_inner,
    transformed,
)

__all__ = [
    "GRADIENT_RTOL",
    "SECOND_ORDER_RTOL",
    "SLOPE_MARGIN",
    "fd_gradient",
    "fd_second_differential",
    "taylor_slope",
    "offdiag_cost_extended",
    "relative_error",
    "form_scale",
    "random_direction",
    "random_transform",
    "CheckReport",
    "check_derivatives",
]

GRADIENT_RTOL = 1e-6
SECOND_ORDER_RTOL = 1e-4
SLOPE_MARGIN = 0.9
TAYLOR_TS = np.geomspace(1e-3, 1e-1, 9)
TAYLOR_W = 0.3
TRIAL_COND_CAP = 1e2
MAX_CHECK_ORDER = 4


def relative_error(a, b) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Frobenius norm; 0 when both vanish."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b)) / scale


def form_scale(hz, z) -> float:
    """``||H(Z)|| ||Z||``, the Cauchy-Schwarz bound on ``|Re<H(Z), Z>|``.

    Quadratic-form errors are measured against it because ``d^2 f(Z)`` itself
    can vanish for an indefinite Hessian. Returns 1 when it is zero.
    """
    s = float(np.linalg.norm(hz) * np.linalg.norm(z))
    return s if s > 0 else 1.0


def fd_gradient(collection: MatrixCollection, q, h: float | None = None) -> np.ndarray:
    """Componentwise central differences of f; imaginary parts probed separately."""
    q = np.asarray(q.q if isinstance(q, TransformPoint) else q)
    if h is None:
        h = 1e-6 * max(1.0, float(np.linalg.norm(q)))
    f = lambda x: offdiag_cost(collection, x)
    complex_ = np.iscomplexobj(q) or collection.field is Field.COMPLEX
    out = np.zeros(q.shape, dtype=np.complex128 if complex_ else np.float64)
    units = (1.0, 1j) if complex_ else (1.0,)
    for idx in np.ndindex(q.shape):
        for u in units:
            e = np.zeros(q.shape, dtype=out.dtype)
            e[idx] = u
            d = (f(q + h * e) - f(q - h * e)) / (2 * h)
            out[idx] += d * u
    return out


def fd_second_differential(collection: MatrixCollection, q, z, h: float | None = None) -> float:
    q = np.asarray(q.q if isinstance(q, TransformPoint) else q)
    z = np.asarray(z)
    if h is None:
        h = 1e-4 * max(1.0, float(np.linalg.norm(q)))
    f = lambda x: offdiag_cost(collection, x)
    return (f(q + h * z) - 2 * f(q) + f(q - h * z)) / h**2


def _solve_ext(a, b):
    """Gaussian elimination with partial pivoting in the dtype of ``a``."""
    a = a.copy()
    b = b.copy()
    n = a.shape[0]
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if a[piv, col] == 0:
            raise SingularTransformError("singular matrix in extended-precision solve")
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
        m = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col:] -= np.outer(m, a[col, col:])
        b[col + 1 :] -= np.outer(m, b[col])
    x = np.empty_like(b)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def offdiag_cost_extended(collection: MatrixCollection, q) -> float:
    """f(Q) evaluated in ``np.longdouble`` arithmetic.

    On x86-64 Linux this is the 80-bit extended format (eps ~1e-19), which
    pushes the roundoff floor of the Taylor remainder below the t^5 terms at
    t = 1e-3. On platforms where longdouble is plain double it degrades to
    ordinary precision.
    """
    complex_ = np.iscomplexobj(q) or collection.field is Field.COMPLEX
    dt = np.clongdouble if complex_ else np.longdouble
    q = np.asarray(q).astype(dt)
    n, K = collection.n, collection.k
    A = collection.matrices.astype(dt)
    rhs = np.concatenate([A[k] @ q for k in range(K)], axis=1)
    X = _solve_ext(q, rhs)
    total = np.longdouble(0)
    off = ~np.eye(n, dtype=bool)
    for k in range(K):
        block = X[:, k * n : (k + 1) * n]
        total += np.sum(np.abs(block[off]) ** 2)
    return total / 2


def taylor_slope(collection: MatrixCollection, q, z, j: int, ts=TAYLOR_TS, safety: float = 100.0) -> float:
    """Least-squares slope of ``log M_j(t)`` against ``log t``.

    ``M_j(t) = max(R_j(t), R_j(-t))``. Taking the larger side means the
    ``t^{j+2}`` term cannot cancel the leading ``t^{j+1}`` term (it enters
    the two sides with opposite relative signs), while an error in ``d^j f``
    still shows on both sides as a ``t^j`` term. ``f(Q + tZ)`` and ``f(Q)`` are evaluated in extended precision. The
    differentials of order 1..j come from the double-precision code under
    test, so their rounding error (at most about
    ``eps * S * sum_i (2 t ||Q^{-1}Z||)^i`` with ``S = sum_k ||D_k||^2``)
    sets a floor below which the remainder carries no information. Grid
    points under ``safety`` times that floor are left out of the fit; if
    fewer than three remain the slope is ``nan``.
    """
    q = TransformPoint.from_matrix(q.q if isinstance(q, TransformPoint) else q)
    z = np.asarray(z)
    terms = [offdiag_cost_extended(collection, q.q)]
    terms += [np.longdouble(jth_differential_f(collection, q, z, i) / math.factorial(i)) for i in range(1, j + 1)]
    S = float(np.sum(np.abs(transformed(collection, q)) ** 2))
    w = float(np.linalg.norm(q.solve(z)))
    eps, eps_ext = np.finfo(np.float64).eps, np.finfo(np.longdouble).eps
    qx = q.q.astype(np.clongdouble if np.iscomplexobj(q.q) or np.iscomplexobj(z) else np.longdouble)
    logs_t, logs_r = [], []
    for t in ts:
        tx = np.longdouble(t)
        r = 0.0
        for sx in (tx, -tx):
            model = sum(c * sx**i for i, c in enumerate(terms))
            r = max(r, float(abs(offdiag_cost_extended(collection, qx + sx * z) - model)))
        floor = safety * S * (eps * sum((2 * t * w) ** i for i in range(1, j + 1)) + eps_ext)
        if r > floor:
            logs_t.append(math.log(t))
            logs_r.append(math.log(r))
    if len(logs_t) < 3:
        return math.nan
    return float(np.polyfit(logs_t, logs_r, 1)[0])


def random_direction(rng: np.random.Generator, q: TransformPoint, complex_: bool, target_norm: float = TAYLOR_W):
    """Gaussian Z rescaled so that ``||Q^{-1} Z|| = target_norm``.

    The default keeps ``t ||Q^{-1} Z|| <= 0.03`` on the Taylor grid while the
    order-4 remainder still clears the roundoff floor over most of it.
    """
    z = rng.standard_normal(q.q.shape)
    if complex_:
        z = z + 1j * rng.standard_normal(q.q.shape)
    return z * (target_norm / np.linalg.norm(q.solve(z)))


def random_transform(rng: np.random.Generator, n: int, complex_: bool, cond_cap: float = TRIAL_COND_CAP) -> tuple[TransformPoint, int]:
    """Gaussian Q redrawn until ``cond(Q) <= cond_cap``; returns (Q, redraws)."""
    redraws = 0
    while True:
        raw = rng.standard_normal((n, n))
        if complex_:
            raw = raw + 1j * rng.standard_normal((n, n))
        if np.linalg.cond(raw) <= cond_cap:
            try:
                return TransformPoint.from_matrix(raw), redraws
            except SingularTransformError:
                pass
        redraws += 1


@dataclass
class CheckReport:
    order: int
    trials: int
    resampled: int
    max_rel_error: dict = field(default_factory=dict)
    min_slope: dict = field(default_factory=dict)
    unresolved: dict = field(default_factory=dict)
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "trials": self.trials,
            "resampled": self.resampled,
            "max_rel_error": self.max_rel_error,
            "min_slope": {str(k): v for k, v in self.min_slope.items()},
            "unresolved": dict(self.unresolved),
            "tolerances": {
                "gradient": GRADIENT_RTOL,
                "second_order": SECOND_ORDER_RTOL,
                "slope_margin": SLOPE_MARGIN,
            },
            "passed": self.passed,
        }


def check_derivatives(collection: MatrixCollection, order: int, trials: int, seed: int = 0) -> CheckReport:
    """Certify derivatives up to ``order`` at ``trials`` random points.

    Trial 0 is taken at Q = I; later trials draw Gaussian Q, resampling
    (and counting) numerically singular draws. Per order j the report holds
    the smallest Taylor slope seen; order 1 also records the gradient
    finite-difference error and order 2 the second-difference and Hessian
    quadratic-form errors.
    """
    if not 1 <= order <= MAX_CHECK_ORDER:
        raise ValueError(f"order must be in 1..{MAX_CHECK_ORDER}, got {order}")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    n = collection.n
    complex_ = collection.field is Field.COMPLEX
    report = CheckReport(order, trials, 0)
    errs = {"gradient": 0.0}
    if order >= 2:
        errs.update(second_fd=0.0, hessian_form=0.0)
    slopes = {j: math.inf for j in range(1, order + 1)}
    for trial in range(trials):
        if trial == 0:
            q = TransformPoint.identity(n, collection.field.dtype)
        else:
            q, redraws = random_transform(rng, n, complex_)
            report.resampled += redraws
        z = random_direction(rng, q, complex_)
        errs["gradient"] = max(errs["gradient"], relative_error(gradient(collection, q), fd_gradient(collection, q)))
        if order >= 2:
            d2 = second_differential_f(collection, q, z)
            hz = hessian_apply(collection, q, z)
            scale = form_scale(hz, z)
            fd2 = fd_second_differential(collection, q, z)
            errs["second_fd"] = max(errs["second_fd"], abs(d2 - fd2) / scale)
            errs["hessian_form"] = max(errs["hessian_form"], abs(real_inner(hz, z) - d2) / scale)
        for j in slopes:
            slope = taylor_slope(collection, q, z, j)
            if math.isnan(slope):
                report.unresolved[str(j)] = report.unresolved.get(str(j), 0) + 1
            else:
                slopes[j] = min(slopes[j], slope)
    report.max_rel_error = errs
    report.min_slope = slopes
    report.passed = (
        errs["gradient"] <= GRADIENT_RTOL
        and errs.get("second_fd", 0.0) <= SECOND_ORDER_RTOL
        and errs.get("hessian_form", 0.0) <= 1e-12
        and all(s >= j + SLOPE_MARGIN for j, s in slopes.items())
        and not report.unresolved
    )
    return report
