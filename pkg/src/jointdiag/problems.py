"""Synthetic problems with ground truth, and the JSON collection file format.

Random streams come from numpy's ``PCG64`` bit generator seeded with
``SeedSequence([seed, attempt])``; normals are drawn with
``Generator.standard_normal``. The same seed gives the same problem on every
platform that ships the same numpy stream (stable since numpy 1.17).

File format (``schema_version`` 1)::

    {
      "schema_version": 1,
      "field": "real" | "complex",
      "n": 2, "k": 1,
      "matrices": [[[1.0, 2.0], [0.0, 3.0]]],
      "ground_truth": {              # optional
        "q": [[...]], "diagonals": [[...]],
        "noise_level": 0.0, "seed": 7, "ensemble": "general"
      }
    }

Complex entries are ``[re, im]`` pairs. Floats are written with Python's
shortest round-trip repr, so ``load(save(x))`` is bit-exact.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass

import numpy as np

from .matcore import Field, MatrixCollection

__all__ = [
    "SCHEMA_VERSION",
    "Ensemble",
    "GeneratedProblem",
    "CollectionFileError",
    "generate_jointly_diagonalizable",
    "random_collection",
    "PlantedProblem",
    "planted_invariant_collection",
    "save",
    "load",
    "dumps",
    "loads",
    "encode_matrix",
    "decode_matrix",
]

SCHEMA_VERSION = 1
COND_CAP = 1e4
_MAX_REDRAWS = 1000


class Ensemble(str, enum.Enum):
    GENERAL = "general"
    SELF_ADJOINT = "selfadjoint"


class CollectionFileError(ValueError):
    """A collection file is malformed or inconsistent."""


@dataclass(frozen=True)
class GeneratedProblem:
    collection: MatrixCollection
    ground_truth_q: np.ndarray
    ground_truth_diagonals: np.ndarray
    noise_level: float
    seed: int
    ensemble: Ensemble = Ensemble.GENERAL


def _rng(seed, attempt=0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), attempt])))


def _normal(rng, shape, field: Field) -> np.ndarray:
    if field is Field.REAL:
        return rng.standard_normal(shape)
    # unit expected squared modulus per entry
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _hermitian_part(x):
    return 0.5 * (x + np.conj(np.swapaxes(x, -1, -2)))


def _haar_unitary(rng, n, field):
    q, r = np.linalg.qr(_normal(rng, (n, n), field))
    d = np.diag(r)
    phase = d / np.abs(d)
    return q * phase.conj()[None, :]


def _check_params(n, k, noise_level):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    if int(k) != k or k < 1:
        raise ValueError(f"k must be an integer >= 1, got {k}")
    if not noise_level >= 0 or not np.isfinite(noise_level):
        raise ValueError(f"noise_level must be finite and nonnegative, got {noise_level}")


def generate_jointly_diagonalizable(
    n: int,
    k: int,
    noise_level: float = 0.0,
    seed: int = 0,
    field: Field | str = Field.REAL,
    ensemble: Ensemble | str = Ensemble.GENERAL,
) -> GeneratedProblem:
    """Draw ``A_k = Q* L_k Q*^{-1} + noise * E_k`` with known ``Q*``.

    ``general``: Gaussian ``Q*`` redrawn (with the next sub-seed) until its
    condition number is at most 1e4, Gaussian diagonals ``L_k``.
    ``selfadjoint``: Haar-distributed unitary ``Q*``, real diagonals, and
    noise replaced by its Hermitian part so every ``A_k`` is exactly
    self-adjoint.
    """
    _check_params(n, k, noise_level)
    field = Field(field)
    ensemble = Ensemble(ensemble)
    for attempt in range(_MAX_REDRAWS):
        rng = _rng(seed, attempt)
        if ensemble is Ensemble.GENERAL:
            q = _normal(rng, (n, n), field)
            if np.linalg.cond(q) > COND_CAP:
                continue
            lam = _normal(rng, (k, n), field)
            # Q L Q^{-1} = (Q^{-T} (Q L)^T)^T
            QL = q[None, :, :] * lam[:, None, :]
            mats = np.stack([np.linalg.solve(q.T, m.T).T for m in QL])
        else:
            q = _haar_unitary(rng, n, field)
            lam = rng.standard_normal((k, n))
            mats = np.stack([(q * l[None, :]) @ q.conj().T for l in lam])
            mats = _hermitian_part(mats)
        noise = _normal(rng, (k, n, n), field)
        if ensemble is Ensemble.SELF_ADJOINT:
            noise = _hermitian_part(noise)
        mats = mats + noise_level * noise
        if ensemble is Ensemble.SELF_ADJOINT:
            mats = _hermitian_part(mats)
        return GeneratedProblem(
            collection=MatrixCollection(mats, field),
            ground_truth_q=q,
            ground_truth_diagonals=lam.astype(field.dtype),
            noise_level=float(noise_level),
            seed=int(seed),
            ensemble=ensemble,
        )
    raise RuntimeError("could not draw a well-conditioned ground truth")  # pragma: no cover


def random_collection(
    n: int,
    k: int,
    seed: int = 0,
    field: Field | str = Field.REAL,
    ensemble: Ensemble | str = Ensemble.GENERAL,
) -> MatrixCollection:
    """I.i.d. Gaussian collection; Hermitian part taken for ``selfadjoint``."""
    if int(n) != n or n < 1 or int(k) != k or k < 1:
        raise ValueError("n and k must be positive integers")
    field = Field(field)
    mats = _normal(_rng(seed), (k, n, n), field)
    if Ensemble(ensemble) is Ensemble.SELF_ADJOINT:
        mats = _hermitian_part(mats)
    return MatrixCollection(mats, field)


@dataclass(frozen=True)
class PlantedProblem:
    """Collection sharing the invariant subspace spanned by ``basis`` (n x m)."""

    collection: MatrixCollection
    basis: np.ndarray
    seed: int


def planted_invariant_collection(
    n: int,
    k: int,
    dim: int = 1,
    seed: int = 0,
    field: Field | str = Field.REAL,
) -> PlantedProblem:
    """``A_k = P T_k P^{-1}`` with every ``T_k`` block upper triangular.

    The leading ``dim`` columns of P span a common invariant subspace. P is
    redrawn until its condition number is at most 1e4; ``basis`` is the
    orthonormalized span of those columns.
    """
    _check_params(n, k, 0.0)
    if not 1 <= dim <= n - 1:
        raise ValueError(f"dim must be in [1, {n - 1}], got {dim}")
    field = Field(field)
    for attempt in range(_MAX_REDRAWS):
        rng = _rng(seed, attempt)
        p = _normal(rng, (n, n), field)
        if np.linalg.cond(p) > COND_CAP:
            continue
        t = _normal(rng, (k, n, n), field)
        t[:, dim:, :dim] = 0
        # P T P^{-1} = (P^{-T} (P T)^T)^T
        mats = np.stack([np.linalg.solve(p.T, (p @ tk).T).T for tk in t])
        basis, _ = np.linalg.qr(p[:, :dim])
        return PlantedProblem(MatrixCollection(mats, field), basis, int(seed))
    raise RuntimeError("could not draw a well-conditioned basis")  # pragma: no cover


# --- serialization -------------------------------------------------------


def encode_matrix(a) -> list:
    """Nested lists; complex entries become ``[re, im]`` pairs."""
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).tolist()
    return a.astype(np.float64).tolist()


def decode_matrix(data, field: Field, where="matrix", ndim: int | None = None) -> np.ndarray:
    """Inverse of :func:`encode_matrix`; ``ndim`` is the expected rank of the result."""
    try:
        arr = np.array(data, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CollectionFileError(f"{where}: entries must be numbers ({exc})") from None
    if field is Field.COMPLEX:
        if arr.ndim < 1 or arr.shape[-1] != 2 or (ndim is not None and arr.ndim != ndim + 1):
            raise CollectionFileError(f"{where}: complex entries must be [re, im] pairs")
        arr = arr[..., 0] + 1j * arr[..., 1]
    if not np.all(np.isfinite(arr)):
        raise CollectionFileError(f"{where}: non-finite entry")
    return arr


def _to_document(obj) -> dict:
    if isinstance(obj, GeneratedProblem):
        coll = obj.collection
    elif isinstance(obj, MatrixCollection):
        coll = obj
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "field": coll.field.value,
        "n": coll.n,
        "k": coll.k,
        "matrices": encode_matrix(coll.matrices),
    }
    if isinstance(obj, GeneratedProblem):
        doc["ground_truth"] = {
            "q": encode_matrix(np.asarray(obj.ground_truth_q, dtype=coll.field.dtype)),
            "diagonals": encode_matrix(np.asarray(obj.ground_truth_diagonals, dtype=coll.field.dtype)),
            "noise_level": obj.noise_level,
            "seed": obj.seed,
            "ensemble": obj.ensemble.value,
        }
    return doc


def dumps(obj) -> str:
    return json.dumps(_to_document(obj), indent=1, allow_nan=False) + "\n"


def save(obj, path) -> None:
    """Write a collection or generated problem as a UTF-8 JSON file."""
    with open(os.fspath(path), "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def _require(doc, key, kind):
    if key not in doc:
        raise CollectionFileError(f"missing field {key!r}")
    val = doc[key]
    if kind is int and (isinstance(val, bool) or not isinstance(val, int)):
        raise CollectionFileError(f"field {key!r} must be an integer, got {val!r}")
    return val


def loads(text: str, source="<string>"):
    """Parse a collection file; returns a GeneratedProblem when ground truth is present."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CollectionFileError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CollectionFileError(f"{source}: top level must be an object")
    version = _require(doc, "schema_version", int)
    if version != SCHEMA_VERSION:
        raise CollectionFileError(f"{source}: unsupported schema_version {version} (expected {SCHEMA_VERSION})")
    field_tag = _require(doc, "field", str)
    try:
        field = Field(field_tag)
    except ValueError:
        raise CollectionFileError(f"{source}: field must be 'real' or 'complex', got {field_tag!r}") from None
    n = _require(doc, "n", int)
    k = _require(doc, "k", int)
    if n < 1 or k < 1:
        raise CollectionFileError(f"{source}: n and k must be positive (n={n}, k={k})")
    raw = _require(doc, "matrices", list)
    if not isinstance(raw, list):
        raise CollectionFileError(f"{source}: 'matrices' must be a list")
    if len(raw) != k:
        raise CollectionFileError(f"{source}: k={k} but {len(raw)} matrices present")
    mats = []
    for idx, m in enumerate(raw):
        arr = decode_matrix(m, field, where=f"{source}: matrices[{idx}]", ndim=2)
        if field is Field.REAL and arr.ndim == 3:
            raise CollectionFileError(f"{source}: matrices[{idx}] has [re, im] pair entries but field is 'real'")
        if arr.shape != (n, n):
            raise CollectionFileError(f"{source}: matrices[{idx}] has shape {arr.shape}, expected ({n}, {n})")
        mats.append(arr)
    collection = MatrixCollection(np.stack(mats), field)
    gt = doc.get("ground_truth")
    if gt is None:
        return collection
    if not isinstance(gt, dict):
        raise CollectionFileError(f"{source}: 'ground_truth' must be an object")
    q = decode_matrix(_require(gt, "q", list), field, where=f"{source}: ground_truth.q", ndim=2)
    diags = decode_matrix(_require(gt, "diagonals", list), field, where=f"{source}: ground_truth.diagonals", ndim=2)
    if q.shape != (n, n) or diags.shape != (k, n):
        raise CollectionFileError(f"{source}: ground_truth dimensions do not match n={n}, k={k}")
    return GeneratedProblem(
        collection=collection,
        ground_truth_q=q,
        ground_truth_diagonals=diags,
        noise_level=float(gt.get("noise_level", 0.0)),
        seed=int(gt.get("seed", 0)),
        ensemble=Ensemble(gt.get("ensemble", Ensemble.GENERAL.value)),
    )


def load(path):
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), source=path)


def as_collection(obj) -> MatrixCollection:
    return obj.collection if isinstance(obj, GeneratedProblem) else obj
