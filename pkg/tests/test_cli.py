import csv
import json

import numpy as np
import pytest

from bellman_lab.cli import main, parse_grid
from bellman_lab.errors import DomainError
from bellman_lab.partition import StepFunction, build_tree


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_closed_form_power(capsys):
    code, out, _ = run(capsys, "closed-form", "--functional", "B", "--p", "2", "--f", "0.5",
                       "--F", "1", "--lambda", "4")
    doc = json.loads(out)
    assert code == 0
    assert doc["value"] == 0.0625 and doc["branch"] == "power"
    assert doc["schema"] == "bellman-lab/closed-form/v1"
    assert doc["thresholds"]["f_over_lambda_to_power"] == 2.0


def test_closed_form_trivial(capsys):
    code, out, _ = run(capsys, "closed-form", "--functional", "B", "--p", "2", "--f", "0.5",
                       "--F", "1", "--lambda", "0.3")
    doc = json.loads(out)
    assert (doc["value"], doc["branch"]) == (1, "one")


def test_domain_error_exit_code(capsys):
    code, _, err = run(capsys, "closed-form", "--functional", "B", "--p", "2", "--f", "2",
                       "--F", "1", "--lambda", "1")
    assert code == 2
    assert "f <= F" in err


@pytest.mark.parametrize("argv", [
    ["closed-form", "--functional", "B", "--bogus"],
    ["nonsense"],
    [],
    ["closed-form", "--functional", "B4", "--p", "2", "--f", "1", "--F", "1", "--lambda", "1"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 64
    assert "usage" in err


def test_grid_parsing():
    assert parse_grid("0.5:2:0.5") == [0.5, 1.0, 1.5]
    assert parse_grid("1:1.05:0.1") == [1.0]
    for bad in ("1:1:0.1", "2:1:0.1", "1:2:0", "1:2", "a:b:c"):
        with pytest.raises(DomainError):
            parse_grid(bad)


def test_empty_grid_writes_nothing(capsys, tmp_path):
    code, _, _ = run(capsys, "sweep", "--functional", "B", "--p", "2", "--f", "0.5", "--F", "1",
                     "--lambda-grid", "3:3:1", "--out", str(tmp_path / "s.csv"),
                     "--plot-dir", str(tmp_path / "plots"))
    assert code == 2
    assert list(tmp_path.iterdir()) == []


def test_sweep_B1_gap_within_slack(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--functional", "B1", "--p", "2", "--f", "1", "--F", "1",
                     "--lambda-grid", "0.5:8:0.25", "--depth", "12", "--out", str(out),
                     "--plot-dir", str(tmp_path))
    assert code == 0
    rows = read_csv(out)
    assert [float(r["lambda"]) for r in rows] == [0.5 + 0.25 * i for i in range(30)]
    power = [r for r in rows if r["branch"] == "power"]
    assert power and all(float(r["gap"]) <= 2**-12 for r in power)
    assert (tmp_path / "sweep.csv.manifest.json").exists()
    cf = read_csv(tmp_path / "closed_form.csv")
    ach = read_csv(tmp_path / "achieved.csv")
    assert len(cf) == len(ach) == 30
    cfv = [float(r["closed_form"]) for r in cf]
    achv = [float(r["achieved"]) for r in ach]
    assert all(a >= b for a, b in zip(cfv, cfv[1:]))
    assert all(a >= b for a, b in zip(achv[14:], achv[15:]))


def test_sweep_B_full_range_continuous(capsys, tmp_path):
    out = tmp_path / "b.csv"
    run(capsys, "sweep", "--functional", "B", "--p", "2", "--f", "0.5", "--F", "1",
        "--lambda-grid", "0.25:5:0.25", "--depth", "10", "--out", str(out))
    rows = read_csv(out)
    branches = [r["branch"] for r in rows]
    assert branches[0] == "one" and "f_over_lambda" in branches and branches[-1] == "power"
    vals = [float(r["closed_form"]) for r in rows]
    assert max(abs(a - b) for a, b in zip(vals, vals[1:])) < 0.5
    # at lambda = 2 the two formulas meet
    at2 = next(r for r in rows if float(r["lambda"]) == 2.0)
    assert float(at2["closed_form"]) == 0.25


def test_sweep_order_independent_of_threads(capsys, tmp_path, monkeypatch):
    texts = []
    for threads in ("1", "4"):
        monkeypatch.setenv("BELLMAN_LAB_THREADS", threads)
        out = tmp_path / f"s{threads}.csv"
        run(capsys, "sweep", "--functional", "B", "--p", "3", "--f", "0.4", "--F", "1",
            "--lambda-grid", "0.3:4:0.4", "--depth", "9", "--out", str(out))
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]


def test_bad_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("BELLMAN_LAB_THREADS", "many")
    code, _, _ = run(capsys, "sweep", "--functional", "B", "--p", "3", "--f", "0.4", "--F", "1",
                     "--lambda-grid", "0.3:1:0.4", "--depth", "6")
    assert code == 2


def test_extremal_with_csv(capsys, tmp_path):
    code, out, _ = run(capsys, "extremal", "--functional", "B1", "--p", "2", "--f", "1", "--F", "1",
                       "--lambda", "5", "--depth", "10", "--csv", str(tmp_path / "leaves.csv"))
    doc = json.loads(out)
    assert code == 0 and doc["construction"] == "B1_power"
    assert doc["profile"]["params"]["A1"] == pytest.approx(0.09, rel=1e-12)
    rows = read_csv(tmp_path / "leaves.csv")
    assert len(rows) == 1024
    assert np.mean([float(r["value"]) for r in rows]) == pytest.approx(1.0, rel=1e-12)


def test_norms_and_maximal(capsys, tmp_path):
    path = tmp_path / "phi.json"
    path.write_text(StepFunction(build_tree(2, 2), np.array([4.0, 0, 0, 0])).to_json())
    code, out, _ = run(capsys, "norms", "--input", str(path), "--p", "2")
    doc = json.loads(out)
    assert code == 0
    assert doc["quasi_norm"] == pytest.approx(2.0) and doc["equiv_norm"] == pytest.approx(2.0)
    assert doc["ratios"] == pytest.approx([1.0, 2.0])
    code, out, _ = run(capsys, "maximal", "--values", "4,0,0,0", "--leaf-values", str(tmp_path / "m.csv"))
    assert code == 0
    assert out.splitlines() == ["lambda,measure", "4,0.25", "2,0.5", "1,1"]
    assert [r["maximal"] for r in read_csv(tmp_path / "m.csv")] == ["4", "2", "1", "1"]


def test_norms_needs_input(capsys):
    code, _, _ = run(capsys, "norms", "--p", "2")
    assert code == 2
    code, _, _ = run(capsys, "norms", "--p", "2", "--values", "1,2,3")
    assert code == 2


def test_verify_bound_and_certificate(capsys, tmp_path):
    cert = tmp_path / "cert.json"
    code, out, _ = run(capsys, "verify-bound", "--functional", "B", "--p", "2", "--f", "0.5", "--F", "1",
                       "--lambda", "4", "--trials", "300", "--depth", "8", "--emit-certificate", str(cert))
    doc = json.loads(out)
    assert code == 0 and doc["violations"] == 0
    assert doc["schema"] == "bellman-lab/verify-bound/v1"
    phi = StepFunction.from_json(cert.read_text())
    assert phi.partition.depth == 8
    manifest = json.loads((tmp_path / "cert.json.manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["subcommand"] == "verify-bound"
    assert "wall_clock_seconds" in manifest


def test_search_runs(capsys):
    code, out, _ = run(capsys, "search", "--functional", "B2", "--p", "2", "--f", "0.5", "--F", "1",
                       "--lambda", "1.5", "--trials", "20", "--depth", "8", "--moves", "200",
                       "--optimizer", "anneal")
    doc = json.loads(out)
    assert code == 0
    assert doc["best"] <= 1 / 3 + 1e-12
