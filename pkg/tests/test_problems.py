import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from jointdiag.matcore import Field, MatrixCollection, offdiag_cost
from jointdiag.problems import (
    CollectionFileError,
    Ensemble,
    GeneratedProblem,
    dumps,
    generate_jointly_diagonalizable,
    load,
    loads,
    planted_invariant_collection,
    random_collection,
    save,
)
from jointdiag.schemas import COLLECTION_FILE, load_schema
from jointdiag.wellposed import sylvester_discriminant

jsonschema = pytest.importorskip("jsonschema")
seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("field", ["real", "complex"])
@pytest.mark.parametrize("ensemble", ["general", "selfadjoint"])
def test_noiseless_ground_truth(field, ensemble):
    p = generate_jointly_diagonalizable(4, 3, 0.0, seed=2, field=field, ensemble=ensemble)
    total = float(np.sum(np.abs(p.collection.matrices) ** 2))
    assert offdiag_cost(p.collection, p.ground_truth_q) <= 1e-20 * total
    assert p.collection.field is Field(field)


def test_selfadjoint_exact():
    for field in ("real", "complex"):
        coll = random_collection(5, 3, seed=1, field=field, ensemble="selfadjoint")
        for a in coll.matrices:
            assert np.array_equal(a, a.conj().T)
        p = generate_jointly_diagonalizable(5, 3, 1e-2, seed=1, field=field, ensemble="selfadjoint")
        for a in p.collection.matrices:
            assert np.array_equal(a, a.conj().T)


@given(seeds, st.sampled_from(["real", "complex"]))
def test_same_seed_same_collection(seed, field):
    a = generate_jointly_diagonalizable(3, 2, 1e-3, seed, field)
    b = generate_jointly_diagonalizable(3, 2, 1e-3, seed, field)
    assert a.collection.matrices.tobytes() == b.collection.matrices.tobytes()
    assert dumps(a) == dumps(b)
    c = random_collection(3, 2, seed, field)
    assert c.matrices.tobytes() == random_collection(3, 2, seed, field).matrices.tobytes()


def test_different_seeds_differ():
    assert not np.array_equal(random_collection(3, 2, 0).matrices, random_collection(3, 2, 1).matrices)


@pytest.mark.parametrize("seed", range(20))
def test_random_n3_k1_has_distinct_eigenvalues(seed):
    assert sylvester_discriminant(random_collection(3, 1, seed).matrices[0]).distinct


def test_generator_validation():
    for bad in [dict(n=1, k=2), dict(n=3, k=0), dict(n=2.5, k=1), dict(n=3, k=1, noise_level=-1.0)]:
        with pytest.raises(ValueError):
            generate_jointly_diagonalizable(**bad)
    with pytest.raises(ValueError):
        random_collection(3, 2, 0, ensemble="hermitian")
    with pytest.raises(ValueError):
        planted_invariant_collection(3, 2, dim=3)


def test_planted_basis_is_invariant():
    p = planted_invariant_collection(5, 3, dim=2, seed=4, field="complex")
    b = p.basis
    np.testing.assert_allclose(b.conj().T @ b, np.eye(2), atol=1e-12)
    for a in p.collection.matrices:
        ab = a @ b
        assert np.linalg.norm(ab - b @ (b.conj().T @ ab)) <= 1e-10 * np.linalg.norm(a)


# --- serialization ---------------------------------------------------------


@given(seeds, st.integers(1, 5), st.integers(1, 3), st.sampled_from(["real", "complex"]))
def test_roundtrip_bit_exact(seed, n, k, field):
    r = np.random.default_rng(seed)
    mats = r.standard_normal((k, n, n)) * 10.0 ** r.integers(-300, 300, size=(k, n, n))
    if field == "complex":
        mats = mats + 1j * r.standard_normal((k, n, n))
    coll = MatrixCollection(mats, field)
    back = loads(dumps(coll))
    assert back.field is coll.field
    assert back.matrices.tobytes() == coll.matrices.tobytes()


def test_roundtrip_generated_problem(tmp_path):
    p = generate_jointly_diagonalizable(3, 2, 1e-3, seed=9, field="complex")
    path = tmp_path / "p.json"
    save(p, path)
    back = load(path)
    assert isinstance(back, GeneratedProblem)
    assert back.collection.matrices.tobytes() == p.collection.matrices.tobytes()
    assert back.ground_truth_q.tobytes() == p.ground_truth_q.tobytes()
    assert back.ground_truth_diagonals.tobytes() == p.ground_truth_diagonals.tobytes()
    assert (back.noise_level, back.seed, back.ensemble) == (1e-3, 9, Ensemble.GENERAL)
    save(back, tmp_path / "q.json")
    assert (tmp_path / "q.json").read_bytes() == path.read_bytes()


def test_files_validate_against_schema():
    schema = load_schema(COLLECTION_FILE)
    jsonschema.Draft202012Validator.check_schema(schema)
    for obj in (random_collection(3, 2, 0, "complex"), generate_jointly_diagonalizable(3, 2, 0.0, 1)):
        jsonschema.validate(json.loads(dumps(obj)), schema)


def _doc(**over):
    doc = {"schema_version": 1, "field": "real", "n": 2, "k": 1, "matrices": [[[1.0, 0.0], [0.0, 2.0]]]}
    doc.update(over)
    return json.dumps(doc)


@pytest.mark.parametrize(
    "text, match",
    [
        ("{not json", "invalid JSON"),
        ("[1, 2]", "top level"),
        (_doc(schema_version=2), "schema_version 2"),
        (_doc(field="quaternion"), "field"),
        (_doc(k=2), "k=2 but 1 matrices"),
        (_doc(matrices=[[[1.0, 0.0], [0.0]]]), "matrices\\[0\\]"),
        (_doc(matrices=[[[[1.0, 0.0], 0.0], [0.0, 2.0]]]), "matrices\\[0\\]"),
        (_doc(matrices=[[[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [2.0, 0.0]]]]), "field is 'real'"),
        (_doc(field="complex"), "\\[re, im\\]"),
        (_doc(n=3), "expected \\(3, 3\\)"),
        (_doc(n="2"), "integer"),
        (_doc(ground_truth={"q": [[1.0]], "diagonals": [[1.0, 2.0]]}), "ground_truth"),
    ],
)
def test_validation_errors(text, match):
    with pytest.raises(CollectionFileError, match=match):
        loads(text)


def test_parse_error_has_line_context(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "n": 2,\n "k": oops\n}\n')
    with pytest.raises(CollectionFileError, match=r"bad.json:3:"):
        load(path)


def test_worked_example_file_loads():
    from pathlib import Path

    example = Path(__file__).resolve().parents[1] / "docs" / "example_collection.json"
    problem = load(example)
    assert isinstance(problem, GeneratedProblem)
    jsonschema.validate(json.loads(example.read_text()), load_schema(COLLECTION_FILE))
