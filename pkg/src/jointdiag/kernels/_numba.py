"""Loop-level kernels compiled with numba.

Same contracts as the numpy backend. Loops over ``k`` run in index order so
both backends reduce identically up to roundoff inside each product.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _mask_inplace(x):
    for i in range(x.shape[0]):
        x[i, i] = 0


@njit(cache=True)
def _adj(x):
    return np.ascontiguousarray(x.T).conj()


@njit(cache=True)
def _real_inner(a, b):
    acc = 0.0
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            acc += a[i, j].real * b[i, j].real + a[i, j].imag * b[i, j].imag
    return acc


@njit(cache=True)
def offdiag_sumsq(D):
    K, n, _ = D.shape
    total = 0.0
    for k in range(K):
        for i in range(n):
            for j in range(n):
                if i != j:
                    v = D[k, i, j]
                    total += v.real * v.real + v.imag * v.imag
    return total


@njit(cache=True)
def bracket_sum(D):
    K, n, _ = D.shape
    out = np.zeros((n, n), dtype=D.dtype)
    for k in range(K):
        Dk = np.ascontiguousarray(D[k])
        Dh = _adj(Dk)
        JD = Dk.copy()
        _mask_inplace(JD)
        out += Dh @ JD - JD @ Dh
    return out


@njit(cache=True)
def hessian_core(D, W):
    K, n, _ = D.shape
    out = np.zeros((n, n), dtype=D.dtype)
    Wh = _adj(W)
    for k in range(K):
        Dk = np.ascontiguousarray(D[k])
        Dh = _adj(Dk)
        JD = Dk.copy()
        _mask_inplace(JD)
        C = Dk @ W - W @ Dk
        _mask_inplace(C)
        WDh = _adj(W @ Dk)
        out += (Dh @ C - C @ Dh) + (Wh @ JD - JD @ Wh) @ Dh + (JD @ WDh - WDh @ JD)
    return out


@njit(cache=True)
def d1_form(D, W):
    K = D.shape[0]
    total = 0.0
    for k in range(K):
        Dk = np.ascontiguousarray(D[k])
        JD = Dk.copy()
        _mask_inplace(JD)
        total += _real_inner(Dk @ W - W @ Dk, JD)
    return total


@njit(cache=True)
def d2_form(D, W):
    K = D.shape[0]
    total = 0.0
    for k in range(K):
        Dk = np.ascontiguousarray(D[k])
        JD = Dk.copy()
        _mask_inplace(JD)
        C = Dk @ W - W @ Dk
        _mask_inplace(C)
        WD = W @ Dk
        E = W @ WD - WD @ W
        total += _real_inner(C, C) + 2.0 * _real_inner(E, JD)
    return total


@njit(cache=True)
def faddeev_leverrier(A):
    n = A.shape[0]
    coeffs = np.zeros(n + 1, dtype=A.dtype)
    coeffs[n] = 1
    M = np.zeros_like(A)
    eye = np.eye(n).astype(A.dtype)
    for k in range(1, n + 1):
        M = A @ M + coeffs[n - k + 1] * eye
        coeffs[n - k] = -np.trace(A @ M) / k
    return coeffs
