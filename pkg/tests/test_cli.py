import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from jointdiag import cli
from jointdiag.problems import load, random_collection, save
from jointdiag.schemas import RUN_REPORT, load_schema

jsonschema = pytest.importorskip("jsonschema")
REPORT_SCHEMA = load_schema(RUN_REPORT)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    report = json.loads(out)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert report["exit_code"] == code
    return code, report, err


@pytest.fixture
def problem_file(tmp_path, capsys):
    path = tmp_path / "p.json"
    run(capsys, "generate", "--n", 4, "--k", 3, "--noise", 0, "--seed", 7, "--field", "real", "--out", path)
    return path


def test_schema_is_valid():
    jsonschema.Draft202012Validator.check_schema(REPORT_SCHEMA)


def test_generate(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, rep, _ = run(capsys, "generate", "--n", 4, "--k", 3, "--seed", 7, "--out", a)
    assert code == 0 and rep["outputs"]["n"] == 4 and rep["inputs"]["seed"] == 7
    run(capsys, "generate", "--n", 4, "--k", 3, "--seed", 7, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_n1(tmp_path, capsys):
    code, rep, err = run(capsys, "generate", "--n", 1, "--k", 3, "--out", tmp_path / "x.json")
    assert code == 2 and "n" in rep["outputs"]["error"] and err


def test_argparse_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["generate", "--n", "3"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        cli.main(["discriminant", "--input", "x.json", "--index", "0", "--all"])
    capsys.readouterr()


def test_solve_newton(problem_file, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--trace-out", trace)
    out = rep["outputs"]
    assert code == 0 and out["f_final"] <= 1e-12
    assert out["f_ground_truth"] <= 1e-20
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["iter", "f", "grad_norm"]
    assert [float(r[1]) for r in rows[1:]] == out["f_history"]


def test_solve_deterministic_trace(problem_file, tmp_path, capsys):
    traces = []
    for name in ("t1.csv", "t2.csv"):
        run(capsys, "solve", "--input", problem_file, "--method", "gd", "--max-iters", 50, "--trace-out", tmp_path / name)
        traces.append((tmp_path / name).read_bytes())
    assert traces[0] == traces[1]


def test_solve_max_iters_exit_code(problem_file, capsys):
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--method", "gd", "--max-iters", 2)
    assert code == cli.EXIT_MAX_ITERS and rep["outputs"]["termination"] == "MaxIters"


def test_solve_unitary_on_general_input(problem_file, capsys):
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--method", "unitary")
    assert code == 2 and rep["outputs"]["index"] == 0


def test_solve_unitary_symmetrize(problem_file, capsys):
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--method", "unitary", "--symmetrize", "--max-iters", 5)
    assert code in (0, 3)


def test_solve_with_q0(problem_file, tmp_path, capsys):
    q0 = tmp_path / "q0.json"
    from jointdiag.matcore import MatrixCollection

    save(MatrixCollection(np.eye(4)[None] + 0.1), q0)
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--q0", q0)
    assert code == 0
    save(MatrixCollection(np.eye(3)[None]), q0)
    code, rep, _ = run(capsys, "solve", "--input", problem_file, "--q0", q0)
    assert code == 2


def test_missing_and_malformed_input(tmp_path, capsys):
    code, rep, _ = run(capsys, "solve", "--input", tmp_path / "nope.json")
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, rep, _ = run(capsys, "solve", "--input", bad)
    assert code == 2 and rep["outputs"]["error_type"] == "CollectionFileError"


def test_check_derivatives_cli(tmp_path, capsys):
    path = tmp_path / "r.json"
    save(random_collection(3, 2, 0), path)
    code, rep, _ = run(capsys, "check-derivatives", "--input", path, "--order", 2, "--trials", 50)
    assert code == 0 and rep["outputs"]["passed"]
    code, rep, _ = run(capsys, "check-derivatives", "--input", path, "--order", 5)
    assert code == 2


def test_check_derivatives_diagonal_exact(tmp_path, capsys):
    from jointdiag.matcore import MatrixCollection

    path = tmp_path / "d.json"
    save(MatrixCollection(np.stack([np.diag([1.0, 2.0, 3.0]), np.diag([0.5, -1.0, 4.0])])), path)
    code, rep, _ = run(capsys, "check-derivatives", "--input", path, "--order", 1, "--trials", 1)
    assert rep["outputs"]["max_rel_error"]["gradient"] == 0.0


def test_probe_cli(tmp_path, capsys):
    from jointdiag.matcore import MatrixCollection

    tri = tmp_path / "tri.json"
    save(MatrixCollection(np.array([[1.0, 1.0], [0.0, 2.0]])), tri)
    target = tmp_path / "z.json"
    save(MatrixCollection(np.diag([1.0, 0.0])[None]), target)
    code, rep, _ = run(capsys, "probe", "--input", tri, "--rank", 1, "--target", "file", target)
    assert code == 0 and rep["outputs"]["verdict"] == "Bounded"
    rnd = tmp_path / "rnd.json"
    save(random_collection(4, 2, 3), rnd)
    code, rep, _ = run(capsys, "probe", "--input", rnd, "--rank", 2)
    assert rep["outputs"]["verdict"] == "Diverging"
    for rank in (0, 4):
        code, _, _ = run(capsys, "probe", "--input", rnd, "--rank", rank)
        assert code == 2
    code, _, _ = run(capsys, "probe", "--input", tri, "--rank", 1, "--target", "file", target, "extra")
    assert code == 2


def test_discriminant_cli(tmp_path, capsys):
    from jointdiag.matcore import MatrixCollection

    path = tmp_path / "m.json"
    save(MatrixCollection(np.stack([np.diag([1.0, 2.0]), np.array([[0.0, 1.0], [0.0, 0.0]])])), path)
    code, rep, _ = run(capsys, "discriminant", "--input", path, "--all")
    first, second = rep["outputs"]["reports"]
    assert first["sylvester_det"] == pytest.approx(-1.0) and first["distinct"]
    assert second["sylvester_det"] == 0 and not second["distinct"]
    code, _, _ = run(capsys, "discriminant", "--input", path, "--index", 2)
    assert code == 2
    big = tmp_path / "big.json"
    save(MatrixCollection(np.eye(13)[None]), big)
    code, rep, _ = run(capsys, "discriminant", "--input", big, "--index", 0)
    assert code == 2 and rep["outputs"]["error_type"] == "UnsupportedSizeError"


def test_console_entry_point(tmp_path):
    out = tmp_path / "e.json"
    res = subprocess.run(
        [sys.executable, "-m", "jointdiag", "generate", "--n", "3", "--k", "1", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0
    report = json.loads(res.stdout)
    jsonschema.validate(report, REPORT_SCHEMA)
    assert load(out).collection.n == 3
