"""Vectorized numpy kernels operating on stacks of transformed matrices.

Every function takes ``D`` of shape ``(K, n, n)`` holding the similarity
transforms ``Q^{-1} A_k Q`` and reduces over ``k`` in index order.
"""

import numpy as np


def _offdiag(x):
    out = x.copy()
    idx = np.arange(x.shape[-1])
    out[..., idx, idx] = 0
    return out


def _adj(x):
    return np.conj(np.swapaxes(x, -1, -2))


def _real_inner(a, b):
    return float(np.sum(a.real * b.real) + np.sum(a.imag * b.imag))


def offdiag_sumsq(D):
    total = 0.0
    for k in range(D.shape[0]):
        off = _offdiag(D[k])
        total += float(np.sum(off.real ** 2) + np.sum(off.imag ** 2))
    return total


def bracket_sum(D):
    Dh = _adj(D)
    JD = _offdiag(D)
    terms = Dh @ JD - JD @ Dh
    return _ordered_sum(terms)


def hessian_core(D, W):
    Dh = _adj(D)
    JD = _offdiag(D)
    Wh = _adj(W)
    C = _offdiag(D @ W - W @ D)
    t1 = Dh @ C - C @ Dh
    t2 = (Wh @ JD - JD @ Wh) @ Dh
    WDh = _adj(W @ D)
    t3 = JD @ WDh - WDh @ JD
    return _ordered_sum(t1 + t2 + t3)


def d1_form(D, W):
    C = D @ W - W @ D
    JD = _offdiag(D)
    return sum(_real_inner(C[k], JD[k]) for k in range(D.shape[0]))


def d2_form(D, W):
    JD = _offdiag(D)
    C = _offdiag(D @ W - W @ D)
    WD = W @ D
    E = W @ WD - WD @ W
    total = 0.0
    for k in range(D.shape[0]):
        total += _real_inner(C[k], C[k]) + 2.0 * _real_inner(E[k], JD[k])
    return total


def faddeev_leverrier(A):
    """Monic coefficients of det(zI - A), lowest degree first."""
    n = A.shape[0]
    coeffs = np.zeros(n + 1, dtype=A.dtype)
    coeffs[n] = 1
    M = np.zeros_like(A)
    eye = np.eye(n, dtype=A.dtype)
    for k in range(1, n + 1):
        M = A @ M + coeffs[n - k + 1] * eye
        coeffs[n - k] = -np.trace(A @ M) / k
    return coeffs


def _ordered_sum(terms):
    out = np.zeros(terms.shape[1:], dtype=terms.dtype)
    for k in range(terms.shape[0]):
        out += terms[k]
    return out
