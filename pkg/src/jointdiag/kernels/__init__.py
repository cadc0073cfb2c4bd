"""Hot inner kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import from the ``JOINTDIAG_BACKEND``
environment variable: ``numba`` (default when numba imports) or ``numpy``.
Both implementations stay importable as :data:`numpy_backend` and
:data:`numba_backend` (the latter is ``None`` without numba) so they can be
compared directly.
"""

import os
import types

import numpy as np

from . import _numpy as numpy_backend

try:
    from . import _numba as numba_backend
except ImportError:  # pragma: no cover - numba is an optional extra
    numba_backend = None

__all__ = [
    "BACKEND",
    "numpy_backend",
    "numba_backend",
    "get_backend",
    "offdiag_sumsq",
    "bracket_sum",
    "hessian_core",
    "d1_form",
    "d2_form",
    "faddeev_leverrier",
]

_KERNELS = ("offdiag_sumsq", "bracket_sum", "hessian_core", "d1_form", "d2_form", "faddeev_leverrier")


def _select(name):
    name = (name or "").strip().lower()
    if name in ("", "numba", "auto"):
        return "numba" if numba_backend is not None else "numpy"
    if name == "numpy":
        return "numpy"
    raise ValueError(f"JOINTDIAG_BACKEND must be 'numba' or 'numpy', got {name!r}")


BACKEND = _select(os.environ.get("JOINTDIAG_BACKEND"))


def get_backend(name=None) -> types.ModuleType:
    """Return the kernel module for ``name`` (default: the active backend)."""
    chosen = BACKEND if name is None else _select(name)
    return numba_backend if chosen == "numba" else numpy_backend


def _contig(x):
    return np.ascontiguousarray(x)


_active = get_backend()


def offdiag_sumsq(D) -> float:
    """Sum over k of the squared moduli of the off-diagonal entries of D[k]."""
    return float(_active.offdiag_sumsq(_contig(D)))


def bracket_sum(D) -> np.ndarray:
    """``sum_k [D_k^*, J o D_k]``, the gradient at the identity."""
    return _active.bracket_sum(_contig(D))


def _pair(D, W):
    dtype = np.result_type(D, W)
    return np.ascontiguousarray(D, dtype=dtype), np.ascontiguousarray(W, dtype=dtype)


def hessian_core(D, W) -> np.ndarray:
    """Hessian at the identity of the transformed problem, applied to W."""
    return _active.hessian_core(*_pair(D, W))


def d1_form(D, W) -> float:
    """``sum_k Re<[D_k, W], J o D_k>``."""
    return float(_active.d1_form(*_pair(D, W)))


def d2_form(D, W) -> float:
    """``sum_k ||J o [D_k, W]||^2 + 2 Re<[W, W D_k], J o D_k>``."""
    return float(_active.d2_form(*_pair(D, W)))


def faddeev_leverrier(A) -> np.ndarray:
    """Monic coefficients of ``det(zI - A)``, lowest degree first."""
    return _active.faddeev_leverrier(_contig(A))
