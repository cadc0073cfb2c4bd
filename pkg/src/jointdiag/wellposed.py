"""Finite-scale well-posedness diagnostics.

* :func:`divergence_probe` evaluates f along an explicit sequence of
  invertible matrices converging to a rank-deficient target. The sequence
  keeps the target's singular vectors and replaces its zero singular values
  by ``1/j``. Along it f stays bounded exactly when the range of the target
  is a common invariant subspace of the collection.
* :func:`invariant_subspace_witness` searches for a common invariant
  subspace among the spans of eigenvector subsets of ``A_1``.
* :func:`sylvester_discriminant` decides whether a matrix has distinct
  eigenvalues from the resultant of its characteristic polynomial and that
  polynomial's derivative, without calling an eigensolver.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels
from .matcore import MatrixCollection, SingularTransformError, TransformPoint, _as_square, offdiag_cost

__all__ = [
    "RankDeficientTarget",
    "DivergenceProbeReport",
    "Verdict",
    "SubspaceWitness",
    "DiscriminantReport",
    "UnsupportedSizeError",
    "char_poly",
    "sylvester_matrix",
    "sylvester_discriminant",
    "min_eigenvalue_gap",
    "invariant_subspace_witness",
    "lemma2_sequence",
    "divergence_probe",
]

RANK_RTOL = 1e-10
CHAR_POLY_MAX_N = 12
WITNESS_MAX_N = 10
DISCRIMINANT_TOL = 1e-12
GAP_RTOL = 1e-6
_SCALAR_RTOL = 1e-10


class UnsupportedSizeError(ValueError):
    """The requested exact computation is refused at this matrix size."""


# --- characteristic polynomial and resultant -----------------------------


def char_poly(a) -> np.ndarray:
    """Coefficients ``p_0, ..., p_n`` of ``p(z) = det(A - zI)``.

    Computed with the Faddeev-LeVerrier recurrence, so the leading
    coefficient is exactly ``(-1)^n``.
    """
    a = _as_square(a)
    n = a.shape[0]
    if n > CHAR_POLY_MAX_N:
        raise UnsupportedSizeError(
            f"characteristic polynomial refused for n={n} > {CHAR_POLY_MAX_N}; "
            "use an eigenvalue-gap test instead"
        )
    a = a.astype(np.complex128 if np.iscomplexobj(a) else np.float64)
    monic = kernels.faddeev_leverrier(a)
    return monic if n % 2 == 0 else -monic


def sylvester_matrix(p) -> np.ndarray:
    """Sylvester matrix of ``p`` and ``p'`` for coefficients given lowest first.

    Rows ``0..n-2`` hold shifted copies of ``(p_n, ..., p_0)`` and rows
    ``n-1..2n-2`` shifted copies of ``(q_{n-1}, ..., q_0)`` where ``q = p'``.
    """
    p = np.asarray(p)
    n = p.shape[0] - 1
    if n < 1:
        raise ValueError("polynomial must have degree >= 1")
    high = p[::-1]
    dp = (np.arange(1, n + 1) * p[1:])[::-1]
    size = 2 * n - 1
    S = np.zeros((size, size), dtype=p.dtype)
    for i in range(n - 1):
        S[i, i : i + n + 1] = high
    for i in range(n):
        S[n - 1 + i, i : i + n] = dp
    return S


@dataclass(frozen=True)
class DiscriminantReport:
    """Resultant test for distinct eigenvalues.

    ``sylvester_det`` is ``det S(p_A, p_A')`` of the raw polynomial. The
    verdict uses ``normalized_det``, the same determinant for
    ``(A - tr(A)/n I) / scale`` with ``scale = ||A - tr(A)/n I|| / sqrt(n)``;
    it is invariant under shifting and scaling A.
    """

    char_coeffs: np.ndarray
    sylvester_det: complex | float
    normalized_det: complex | float
    scale: float
    distinct: bool
    tol: float

    def to_dict(self) -> dict:
        def num(x):
            x = complex(x)
            return [x.real, x.imag] if x.imag else x.real

        return {
            "char_coeffs": [num(c) for c in self.char_coeffs],
            "sylvester_det": num(self.sylvester_det),
            "normalized_det": num(self.normalized_det),
            "scale": self.scale,
            "distinct": self.distinct,
            "tol": self.tol,
        }


def _det(S):
    return complex(np.linalg.det(S)) if np.iscomplexobj(S) else float(np.linalg.det(S))


def sylvester_discriminant(a, tol: float = DISCRIMINANT_TOL) -> DiscriminantReport:
    a = _as_square(a)
    n = a.shape[0]
    coeffs = char_poly(a)
    raw = _det(sylvester_matrix(coeffs))
    mu = np.trace(a) / n
    centered = a - mu * np.eye(n)
    scale = float(np.linalg.norm(centered) / np.sqrt(n))
    if n == 1:
        return DiscriminantReport(coeffs, raw, raw, scale, True, tol)
    if scale <= _SCALAR_RTOL * max(float(np.linalg.norm(a)), np.finfo(float).tiny):
        # a multiple of the identity: one eigenvalue of multiplicity n
        return DiscriminantReport(coeffs, raw, 0.0, scale, False, tol)
    normalized = _det(sylvester_matrix(char_poly(centered / scale)))
    return DiscriminantReport(coeffs, raw, normalized, scale, bool(abs(normalized) > tol), tol)


# --- common invariant subspaces -----------------------------------------


def min_eigenvalue_gap(eigenvalues) -> float:
    """Smallest pairwise eigenvalue distance relative to ``max |lambda|``.

    Returns ``inf`` for a single eigenvalue and 0 when all eigenvalues vanish.
    """
    lam = np.asarray(eigenvalues)
    if lam.size < 2:
        return float("inf")
    scale = float(np.max(np.abs(lam)))
    if scale == 0:
        return 0.0
    diff = np.abs(lam[:, None] - lam[None, :])
    diff[np.diag_indices(lam.size)] = np.inf
    return float(diff.min() / scale)


@dataclass(frozen=True)
class SubspaceWitness:
    """Orthonormal basis B of a common invariant subspace and the residuals
    ``||(I - B B^*) A_k B||`` for every k."""

    basis: np.ndarray
    residuals: np.ndarray
    eigen_indices: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _invariance_residual(a, basis):
    ab = a @ basis
    return float(np.linalg.norm(ab - basis @ (basis.conj().T @ ab)))


def invariant_subspace_witness(collection: MatrixCollection, tol: float = 1e-10) -> SubspaceWitness | None:
    """Look for a common nontrivial invariant subspace.

    When ``A_1`` has distinct eigenvalues (relative gap at least
    ``GAP_RTOL``) its invariant subspaces are exactly
    the spans of eigenvector subsets, so the search enumerates those
    ``2^n - 2`` spans (by increasing size, then lexicographically in the
    eigenvalue order sorted by real then imaginary part). A span is accepted
    when ``||(I - BB^*) A_k B|| <= tol ||A_k||`` for every k. Subspaces are
    complex in general, also for real data.
    """
    n = collection.n
    if n > WITNESS_MAX_N:
        raise UnsupportedSizeError(f"exhaustive subspace search refused for n={n} > {WITNESS_MAX_N}")
    if n < 2:
        return None
    vals, vecs = sla.eig(collection.matrices[0])
    if min_eigenvalue_gap(vals) < GAP_RTOL:
        raise ValueError("A_1 must have distinct eigenvalues for the subspace enumeration")
    order = np.lexsort((vals.imag, vals.real))
    vecs = vecs[:, order]
    norms = np.linalg.norm(collection.matrices, axis=(1, 2))
    limits = tol * norms
    for m in range(1, n):
        for subset in itertools.combinations(range(n), m):
            basis, _ = np.linalg.qr(vecs[:, subset])
            residuals = np.empty(collection.k)
            ok = True
            for k, a in enumerate(collection.matrices):
                residuals[k] = _invariance_residual(a, basis)
                if residuals[k] > limits[k]:
                    ok = False
                    break
            if ok:
                return SubspaceWitness(basis, residuals, tuple(int(i) for i in order[list(subset)]))
    return None


# --- divergence near rank-deficient points -------------------------------


@dataclass(frozen=True)
class RankDeficientTarget:
    """A nonzero rank-deficient matrix Z with its SVD ``Z = U diag(s) V^*``."""

    z: np.ndarray
    rank: int
    u: np.ndarray
    s: np.ndarray
    vh: np.ndarray

    @classmethod
    def from_matrix(cls, z, rank: int | None = None) -> "RankDeficientTarget":
        z = _as_square(z).astype(np.complex128 if np.iscomplexobj(z) else np.float64)
        n = z.shape[0]
        u, s, vh = np.linalg.svd(z)
        if s[0] == 0:
            raise ValueError("target must be nonzero")
        numeric_rank = int(np.sum(s > RANK_RTOL * s[0]))
        if rank is None:
            rank = numeric_rank
        elif rank != numeric_rank:
            raise ValueError(f"target has numerical rank {numeric_rank}, not {rank}")
        if not 1 <= rank <= n - 1:
            raise ValueError(f"target rank must be in [1, {n - 1}], got {rank}")
        return cls(z, rank, u, s, vh)

    @classmethod
    def from_range(cls, basis, seed: int = 0) -> "RankDeficientTarget":
        """Random target whose range is the column span of ``basis`` (n x r)."""
        basis = np.asarray(basis)
        n, r = basis.shape
        rng = np.random.default_rng(seed)
        coef = rng.standard_normal((r, n))
        if np.iscomplexobj(basis):
            coef = coef + 1j * rng.standard_normal((r, n))
        return cls.from_matrix(basis @ coef, rank=r)

    @classmethod
    def random(cls, n: int, rank: int, seed: int = 0, complex_: bool = False) -> "RankDeficientTarget":
        rng = np.random.default_rng(seed)
        shape_l, shape_r = (n, rank), (rank, n)
        left = rng.standard_normal(shape_l)
        right = rng.standard_normal(shape_r)
        if complex_:
            left = left + 1j * rng.standard_normal(shape_l)
            right = right + 1j * rng.standard_normal(shape_r)
        return cls.from_matrix(left @ right, rank=rank)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    def to_dict(self) -> dict:
        from .problems import encode_matrix

        return {"z": encode_matrix(self.z), "rank": self.rank, "singular_values": self.s.tolist()}


def lemma2_sequence(target: RankDeficientTarget, j: int) -> TransformPoint:
    """``Q_j = U diag(s_1, ..., s_r, 1/j, ..., 1/j) V^*``, which tends to Z."""
    if j < 1:
        raise ValueError("j must be >= 1")
    r = target.rank
    if not target.s[r - 1] > RANK_RTOL * target.s[0]:
        raise ValueError("degenerate target: smallest kept singular value is below the rank tolerance")
    sig = np.concatenate([target.s[:r], np.full(target.n - r, 1.0 / j)])
    return TransformPoint.from_matrix((target.u * sig[None, :]) @ target.vh)


class Verdict(str, enum.Enum):
    DIVERGING = "Diverging"
    BOUNDED = "Bounded"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class DivergenceProbeReport:
    js: list[int]
    f_values: list[float]
    verdict: Verdict
    truncated_at: int | None = None
    loglog_slope: float | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "js": list(self.js),
            "f_values": list(self.f_values),
            "verdict": self.verdict.value,
            "truncated_at": self.truncated_at,
            "loglog_slope": self.loglog_slope,
            "notes": list(self.notes),
        }


def _judge(js, fs, growth_factor, min_slope, flat_ratio):
    if len(fs) < 2:
        return Verdict.INCONCLUSIVE, None
    half = len(fs) // 2
    tail_j = np.asarray(js[half:], dtype=float)
    tail_f = np.asarray(fs[half:], dtype=float)
    slope = None
    if len(tail_f) >= 2 and np.all(tail_f > 0):
        slope = float(np.polyfit(np.log(tail_j), np.log(tail_f), 1)[0])
    increasing = bool(np.all(np.diff(tail_f) > 0))
    if increasing and (fs[-1] > growth_factor * fs[0] or (slope is not None and slope >= min_slope)):
        return Verdict.DIVERGING, slope
    nonincreasing = bool(np.all(np.diff(tail_f) <= 0))
    tail_min = float(tail_f.min())
    flat = tail_min > 0 and float(tail_f.max()) / tail_min < flat_ratio
    if nonincreasing or flat:
        return Verdict.BOUNDED, slope
    return Verdict.INCONCLUSIVE, slope


def divergence_probe(
    collection: MatrixCollection,
    target: RankDeficientTarget,
    js,
    *,
    growth_factor: float = 1e6,
    min_slope: float = 1.0,
    flat_ratio: float = 2.0,
) -> DivergenceProbeReport:
    """Evaluate f along :func:`lemma2_sequence` and classify the trend.

    Over the last half of the series the verdict is

    * ``Diverging``: strictly increasing, and either the last value exceeds
      ``growth_factor`` times the first or the log-log slope in j is at
      least ``min_slope`` (unbounded sequences grow like ``j^2``);
    * ``Bounded``: nonincreasing, or ``max / min < flat_ratio``;
    * ``Inconclusive`` otherwise.

    A ``Bounded`` verdict certifies only this particular path to Z. The raw
    series is always returned. If a ``Q_j`` is rejected as numerically
    singular the series stops there and ``truncated_at`` records j.
    """
    js = [int(j) for j in js]
    if not js:
        raise ValueError("js must be nonempty")
    if any(b <= a for a, b in zip(js, js[1:])) or js[0] < 1:
        raise ValueError("js must be positive and strictly increasing")
    if target.n != collection.n:
        raise ValueError(f"target is {target.n}x{target.n} but collection is {collection.n}x{collection.n}")
    done, fs = [], []
    truncated = None
    for j in js:
        try:
            q = lemma2_sequence(target, j)
        except SingularTransformError:
            truncated = j
            break
        done.append(j)
        fs.append(offdiag_cost(collection, q))
    verdict, slope = _judge(done, fs, growth_factor, min_slope, flat_ratio)
    notes = []
    if truncated is not None:
        notes.append(f"series truncated at j={truncated}: Q_j below the singularity threshold")
    return DivergenceProbeReport(done, fs, verdict, truncated, slope, notes)
