"""Exact derivatives of the off-diagonality functional.

All derivatives are taken with respect to the real inner product
``Re <X, Y>``, so complex matrix space is treated as a real Hilbert space of
dimension ``2 n^2``. The gradient and Hessian returned here satisfy

    f(Q + tZ) = f(Q) + t Re<grad, Z> + t^2/2 Re<H(Z), Z> + O(t^3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .matcore import (
    DimensionError,
    MatrixCollection,
    offdiag_cost,
    real_inner,
    similarity,
    transformed,
    _DEBUG,
    _as_point,
)

__all__ = [
    "MAX_ORDER",
    "DerivativeReport",
    "differential_h",
    "jth_differential_f",
    "first_differential_f",
    "second_differential_f",
    "gradient",
    "gradient_via_base_change",
    "hessian_apply",
    "derivative_report",
]

MAX_ORDER = 20


def _direction(z, n) -> np.ndarray:
    z = np.asarray(z)
    if z.shape != (n, n):
        raise DimensionError(f"direction has shape {z.shape}, expected {(n, n)}")
    return z


def _commutator(x, y):
    return x @ y - y @ x


def differential_h(a, q, z, j: int) -> np.ndarray:
    """j-th differential of ``Q -> Q^{-1} a Q`` evaluated on the diagonal (Z, ..., Z).

    Equal to ``(-1)^j j! [W, W^{j-1} h]`` with ``W = Q^{-1} Z`` and
    ``h = Q^{-1} a Q``.
    """
    if j < 1:
        raise ValueError("j must be >= 1; use similarity() for the zeroth term")
    q = _as_point(q)
    z = _direction(z, q.n)
    h = similarity(a, q)
    W = q.solve(z)
    P = h
    for _ in range(j - 1):
        P = W @ P
    return (-1) ** j * math.factorial(j) * _commutator(W, P)


def _h_differentials(D, W, j):
    """d^l h_k(Z) for l = 0..j, as an array of shape (j + 1, K, n, n)."""
    out = np.empty((j + 1,) + D.shape, dtype=np.result_type(D, W))
    out[0] = D
    P = D
    for l in range(1, j + 1):
        # P = W^{l-1} D here
        out[l] = (-1) ** l * math.factorial(l) * (W @ P - P @ W)
        P = W @ P
    return out


def jth_differential_f(collection: MatrixCollection, q, z, j: int) -> float:
    """j-th differential ``d^j f|_Q(Z, ..., Z)``; ``j = 0`` gives f itself.

    Sums ``1/2 sum_k sum_l C(j, l) Re<d^{j-l} h_k, J o d^l h_k>``.
    """
    if j < 0:
        raise ValueError("order must be nonnegative")
    if j > MAX_ORDER:
        raise ValueError(f"orders above {MAX_ORDER} are not supported")
    q = _as_point(q)
    z = _direction(z, q.n)
    D = transformed(collection, q)
    if j == 0:
        return 0.5 * kernels.offdiag_sumsq(D)
    W = q.solve(z)
    dh = _h_differentials(D, W, j)
    masked = dh.copy()
    idx = np.arange(collection.n)
    masked[..., idx, idx] = 0
    total = 0.0
    for l in range(j + 1):
        total += math.comb(j, l) * real_inner(dh[j - l], masked[l])
    return 0.5 * total


def first_differential_f(collection: MatrixCollection, q, z) -> float:
    """``df|_Q(Z) = sum_k Re<[h_k, Q^{-1}Z], J o h_k>``."""
    q = _as_point(q)
    z = _direction(z, q.n)
    D = transformed(collection, q)
    value = kernels.d1_form(D, q.solve(z))
    if _DEBUG:
        general = jth_differential_f(collection, q, z, 1)
        scale = max(abs(value), abs(general), 1e-300)
        assert abs(general - value) <= 1e-12 * scale, (value, general)
    return value


def second_differential_f(collection: MatrixCollection, q, z) -> float:
    """``d^2 f|_Q(Z) = sum_k ||J o [h_k, W]||^2 + 2 Re<[W, W h_k], J o h_k>``, W = Q^{-1}Z."""
    q = _as_point(q)
    z = _direction(z, q.n)
    D = transformed(collection, q)
    return kernels.d2_form(D, q.solve(z))


def gradient(collection: MatrixCollection, q) -> np.ndarray:
    """Gradient ``sum_k Q^{-*} [D_k^*, J o D_k]`` with ``D_k = Q^{-1} A_k Q``.

    Each term is mapped through ``Q^{-*}`` before summing; see
    :func:`gradient_via_base_change` for the single-solve ordering.
    """
    q = _as_point(q)
    D = transformed(collection, q)
    K, n = collection.k, collection.n
    Dh = np.conj(np.swapaxes(D, 1, 2))
    JD = D.copy()
    idx = np.arange(n)
    JD[:, idx, idx] = 0
    terms = Dh @ JD - JD @ Dh
    rhs = np.transpose(terms, (1, 0, 2)).reshape(n, K * n)
    mapped = q.solve_adjoint(rhs).reshape(n, K, n)
    out = np.zeros((n, n), dtype=mapped.dtype)
    for k in range(K):
        out += mapped[:, k, :]
    return out


def gradient_via_base_change(collection: MatrixCollection, q) -> np.ndarray:
    """Gradient as ``Q^{-*} grad f_D|_I`` where ``D_k = Q^{-1} A_k Q``.

    Same value as :func:`gradient`; the bracket sum is formed first and one
    adjoint solve is applied at the end.
    """
    q = _as_point(q)
    D = transformed(collection, q)
    return q.solve_adjoint(kernels.bracket_sum(D))


def hessian_apply(collection: MatrixCollection, q, z) -> np.ndarray:
    """Apply the Hessian operator at Q to the direction Z.

    With ``W = Q^{-1} Z`` and ``X_k = J o D_k``::

        H(Z) = Q^{-*} sum_k ( [D_k^*, J o [D_k, W]]
                              - [X_k, W^*] D_k^*
                              + [X_k, (W D_k)^*] )

    The middle term is the real adjoint of the last one; its sign is what
    makes ``Re<H(Z), W'>`` symmetric and ``Re<H(Z), Z>`` equal to the second
    differential. The operator is real-linear only: for complex data it mixes
    a complex-linear and a conjugate-linear part.
    """
    q = _as_point(q)
    z = _direction(z, q.n)
    D = transformed(collection, q)
    W = q.solve(z)
    return q.solve_adjoint(kernels.hessian_core(D, W))


@dataclass(frozen=True)
class DerivativeReport:
    f_value: float
    df_z: float
    d2f_z: float
    gradient: np.ndarray
    hessian_z: np.ndarray

    def to_dict(self) -> dict:
        from .problems import encode_matrix

        return {
            "f_value": self.f_value,
            "df_z": self.df_z,
            "d2f_z": self.d2f_z,
            "gradient": encode_matrix(self.gradient),
            "hessian_z": encode_matrix(self.hessian_z),
        }


def derivative_report(collection: MatrixCollection, q, z) -> DerivativeReport:
    """Evaluate f, df(Z), d^2f(Z), the gradient and H(Z) at one point."""
    q = _as_point(q)
    z = _direction(z, q.n)
    return DerivativeReport(
        f_value=offdiag_cost(collection, q),
        df_z=first_differential_f(collection, q, z),
        d2f_z=second_differential_f(collection, q, z),
        gradient=gradient(collection, q),
        hessian_z=hessian_apply(collection, q, z),
    )
