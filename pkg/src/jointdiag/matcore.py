"""Dense matrix core: collections, invertible transform points, the
off-diagonality cost and the Gershgorin norm comparison."""

from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla

from . import kernels

__all__ = [
    "Field",
    "MatrixCollection",
    "TransformPoint",
    "GersgorinBound",
    "DimensionError",
    "SingularTransformError",
    "EigenvalueError",
    "hadamard_offdiag",
    "similarity",
    "transformed",
    "offdiag_cost",
    "gersgorin_check",
    "real_inner",
    "singularity_threshold",
]

_EPS = np.finfo(np.float64).eps
_DEBUG = os.environ.get("JOINTDIAG_DEBUG", "") not in ("", "0")


class DimensionError(ValueError):
    """Matrix shapes are inconsistent."""


class SingularTransformError(ValueError):
    """A transform matrix is numerically singular."""


class EigenvalueError(RuntimeError):
    """The nonsymmetric eigensolver failed."""


class Field(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"

    @property
    def dtype(self):
        return np.float64 if self is Field.REAL else np.complex128

    @classmethod
    def of(cls, *arrays) -> "Field":
        return cls.COMPLEX if any(np.iscomplexobj(a) for a in arrays) else cls.REAL


def _as_square(a, name="matrix") -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class MatrixCollection:
    """The tuple ``(A_1, ..., A_K)`` of n x n matrices over one field.

    ``matrices`` is stored as a read-only array of shape ``(K, n, n)`` with
    dtype float64 (real) or complex128 (complex).
    """

    matrices: np.ndarray
    field: Field = dc_field(default=None)

    def __post_init__(self):
        mats = self.matrices
        if isinstance(mats, (list, tuple)):
            mats = [np.asarray(m) for m in mats]
            shapes = {m.shape for m in mats}
            if len(shapes) > 1:
                raise DimensionError(f"matrices have differing shapes {sorted(shapes)}")
            mats = np.stack(mats) if mats else np.zeros((0, 0, 0))
        mats = np.asarray(mats)
        if mats.ndim == 2:
            mats = mats[None]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionError(f"expected a stack of square matrices, got shape {mats.shape}")
        if mats.shape[0] < 1 or mats.shape[1] < 1:
            raise DimensionError("collection needs k >= 1 and n >= 1")
        fld = self.field
        if fld is None:
            fld = Field.of(mats)
        fld = Field(fld)
        if fld is Field.REAL and np.iscomplexobj(mats):
            if np.any(mats.imag != 0):
                raise ValueError("real collection given complex entries")
            mats = mats.real
        mats = np.array(mats, dtype=fld.dtype, order="C")
        if not np.all(np.isfinite(mats)):
            raise ValueError("collection contains non-finite entries")
        mats.flags.writeable = False
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "field", fld)

    @property
    def k(self) -> int:
        return self.matrices.shape[0]

    @property
    def n(self) -> int:
        return self.matrices.shape[1]

    def __len__(self):
        return self.k

    def __getitem__(self, idx):
        return self.matrices[idx]

    def __iter__(self):
        return iter(self.matrices)

    def self_adjoint_violations(self, rtol=1e-12) -> list[int]:
        """Indices k with ``||A_k - A_k^*|| > rtol * ||A_k||``."""
        bad = []
        for k, a in enumerate(self.matrices):
            if np.linalg.norm(a - a.conj().T) > rtol * np.linalg.norm(a):
                bad.append(k)
        return bad

    def symmetrized(self) -> "MatrixCollection":
        mats = 0.5 * (self.matrices + np.conj(np.swapaxes(self.matrices, 1, 2)))
        return MatrixCollection(mats, self.field)


def singularity_threshold(n: int) -> float:
    """Smallest accepted reciprocal condition number for an n x n transform."""
    return 1e3 * n * _EPS


@dataclass(frozen=True, eq=False)
class TransformPoint:
    """An invertible matrix Q together with its LU factorization.

    Use :meth:`from_matrix` to build one; it rejects matrices whose
    reciprocal 1-norm condition estimate is below
    :func:`singularity_threshold`.
    """

    q: np.ndarray
    lu: np.ndarray
    piv: np.ndarray
    rcond: float

    @classmethod
    def from_matrix(cls, q) -> "TransformPoint":
        q = _as_square(q, "transform").copy()
        if q.dtype.kind not in "fc":
            q = q.astype(np.float64)
        if not np.all(np.isfinite(q)):
            raise SingularTransformError("transform contains non-finite entries")
        n = q.shape[0]
        with warnings.catch_warnings():
            # an exactly singular factor is reported below as an exception
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu, piv = sla.lu_factor(q, check_finite=False)
        if np.any(np.diag(lu) == 0):
            raise SingularTransformError("transform is exactly singular")
        (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
        rcond, info = gecon(lu, np.linalg.norm(q, 1), norm="1")
        rcond = float(np.real(rcond))
        if info != 0 or not rcond > singularity_threshold(n):
            raise SingularTransformError(
                f"reciprocal condition estimate {rcond:.3e} below threshold "
                f"{singularity_threshold(n):.3e}"
            )
        q.flags.writeable = False
        lu.flags.writeable = False
        return cls(q, lu, piv, rcond)

    @classmethod
    def identity(cls, n: int, dtype=np.float64) -> "TransformPoint":
        return cls.from_matrix(np.eye(n, dtype=dtype))

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def dtype(self):
        return self.q.dtype

    def solve(self, b) -> np.ndarray:
        """Return ``Q^{-1} b``."""
        return self._solve(b, trans=0)

    def solve_adjoint(self, b) -> np.ndarray:
        """Return ``Q^{-*} b``."""
        return self._solve(b, trans=2)

    def _solve(self, b, trans):
        b = np.asarray(b)
        if b.shape[0] != self.n:
            raise DimensionError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        lu = self.lu
        if np.iscomplexobj(b) and not np.iscomplexobj(lu):
            lu = lu.astype(np.complex128)
        elif np.iscomplexobj(lu) and not np.iscomplexobj(b):
            b = b.astype(np.complex128)
        return sla.lu_solve((lu, self.piv), b, trans=trans, check_finite=False)


def _as_point(q) -> TransformPoint:
    return q if isinstance(q, TransformPoint) else TransformPoint.from_matrix(q)


def real_inner(a, b) -> float:
    """``Re <a, b>`` with the Frobenius inner product."""
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.sum(a.real * b.real) + np.sum(a.imag * b.imag))


def hadamard_offdiag(a) -> np.ndarray:
    """Return ``J o a``: a copy of ``a`` with its diagonal zeroed."""
    a = _as_square(a)
    out = a.copy()
    np.fill_diagonal(out, 0)
    return out


def similarity(a, q) -> np.ndarray:
    """Similarity transform ``Q^{-1} a Q`` computed by a factorized solve."""
    a = _as_square(a)
    q = _as_point(q)
    if a.shape[0] != q.n:
        raise DimensionError(f"matrix is {a.shape[0]}x{a.shape[0]} but transform is {q.n}x{q.n}")
    return q.solve(a @ q.q)


def transformed(collection: MatrixCollection, q) -> np.ndarray:
    """Stack of ``D_k = Q^{-1} A_k Q`` with shape ``(K, n, n)``.

    All K right-hand sides go through a single LU solve.
    """
    q = _as_point(q)
    K, n = collection.k, collection.n
    if q.n != n:
        raise DimensionError(f"collection is {n}x{n} but transform is {q.n}x{q.n}")
    AQ = collection.matrices @ q.q
    rhs = np.transpose(AQ, (1, 0, 2)).reshape(n, K * n)
    X = q.solve(rhs)
    return np.ascontiguousarray(np.transpose(X.reshape(n, K, n), (1, 0, 2)))


def offdiag_cost(collection: MatrixCollection, q) -> float:
    """Off-diagonality ``f(Q) = 1/2 sum_k ||J o (Q^{-1} A_k Q)||^2``."""
    D = transformed(collection, q)
    value = 0.5 * kernels.offdiag_sumsq(D)
    if _DEBUG:
        masked = 0.5 * sum(np.linalg.norm(hadamard_offdiag(d)) ** 2 for d in D)
        assert abs(masked - value) <= 1e-14 * max(abs(value), np.finfo(float).tiny), (masked, value)
    return value


@dataclass(frozen=True)
class GersgorinBound:
    """Norms in the chain ``||J o A|| <= ||A|| <= sqrt(n)(max|lambda| + 2n||J o A||)``."""

    offdiag_norm: float
    full_norm: float
    spectral_max: float
    upper: float

    @property
    def holds(self) -> bool:
        # small slack for roundoff in the norms and eigenvalues themselves
        slack = 8 * _EPS * max(self.full_norm, self.upper)
        return self.offdiag_norm <= self.full_norm + slack and self.full_norm <= self.upper + slack


def gersgorin_check(a) -> GersgorinBound:
    a = _as_square(a)
    n = a.shape[0]
    try:
        eig = sla.eigvals(a, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenvalueError(f"eigenvalue computation failed: {exc}") from exc
    off = float(np.linalg.norm(hadamard_offdiag(a)))
    full = float(np.linalg.norm(a))
    spec = float(np.max(np.abs(eig))) if n else 0.0
    upper = float(np.sqrt(n) * (spec + 2 * n * off))
    return GersgorinBound(off, full, spec, upper)
