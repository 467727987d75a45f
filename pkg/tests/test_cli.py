import hashlib
import json
import math

import pytest

from mbdet import cli
from mbdet.ensemble import EnsembleSpec, FHSingularity
from mbdet.oracle import DeterminantRecord, write_records_csv


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "s.json").write_text(EnsembleSpec(1, 4).to_json())
    return tmp_path


def run(argv, capsys):
    rc = cli.main(argv)
    out, err = capsys.readouterr()
    return rc, out, err


def test_constants_to_stdout(workdir, capsys):
    rc, out, _ = run(["constants", "--spec", "s.json", "--json"], capsys)
    assert rc == 0
    d = json.loads(out)
    assert d["C1"] == pytest.approx(math.log(0.75), abs=1e-12)
    man = json.loads((workdir / "mb-constants.manifest.json").read_text())
    assert man["spec_sha256"] == hashlib.sha256((workdir / "s.json").read_bytes()).hexdigest()
    assert man["command"] == "constants" and man["version"]


def test_missing_spec_names_file(workdir, capsys):
    rc, _, err = run(["eq", "--spec", "missing.json"], capsys)
    assert rc == 1
    assert "missing.json" in err


def test_usage_errors_exit_1(workdir, capsys):
    assert run(["nosuch"], capsys)[0] == 1
    assert run(["eq", "--spec", "s.json", "--bogus"], capsys)[0] == 1
    assert run([], capsys)[0] == 1


def test_fit_too_few_rows_exit_2(workdir, capsys):
    write_records_csv([DeterminantRecord(n, -0.1 * n, 0.0, 256, 0.0) for n in (8, 9, 10)], workdir / "d.csv")
    rc, _, err = run(["fit", "--dets", "d.csv", "--spec", "s.json"], capsys)
    assert rc == 2
    assert "RankDeficient" in err


def test_equilibrium_rejects_large_beta(workdir, capsys):
    spec = EnsembleSpec(1, 4, singularities=[FHSingularity(2.0, 0, 0.3)])
    (workdir / "bad.json").write_text(spec.to_json())
    assert run(["eq", "--spec", "bad.json"], capsys)[0] == 1
    rc, _, err = run(["report", "--spec", "bad.json"], capsys)
    assert rc == 1 and "[equilibrium]" in err


def test_eq_grid_output(workdir, capsys):
    rc, out, _ = run(["eq", "--spec", "s.json", "--json", "eq.json", "--grid", "5", "--grid-out", "g.csv"], capsys)
    assert rc == 0 and out == ""
    d = json.loads((workdir / "eq.json").read_text())
    assert d["c0"] == pytest.approx(2.25, abs=1e-12)
    assert len((workdir / "g.csv").read_text().splitlines()) == 6
    man = json.loads((workdir / "g.csv.manifest.json").read_text())
    assert {o["path"] for o in man["outputs"]} == {"g.csv", "eq.json"}


def test_oracle_fit_roundtrip(workdir, capsys):
    assert run(["oracle", "--spec", "s.json", "--nmin", "1", "--nmax", "24", "--out", "d.csv"], capsys)[0] == 0
    rc, out, _ = run(["fit", "--dets", "d.csv", "--spec", "s.json", "--json"], capsys)
    assert rc == 0
    rep = json.loads(out)
    assert rep["pass"] and rep["n_range"] == [8, 24]
    assert set(rep) >= {"fitted", "analytic", "abs_err", "pass", "tolerances"}
    man = json.loads((workdir / "d.csv.manifest.json").read_text())
    assert man["outputs"][0]["sha256"] == hashlib.sha256((workdir / "d.csv").read_bytes()).hexdigest()


def test_sample_reproducible_and_reports(workdir, capsys):
    args = ["sample", "--spec", "s.json", "--n", "8", "--chains", "2", "--steps", "3000", "--seed", "7"]
    assert run(args + ["--out", "a.csv"], capsys)[0] == 0
    assert run(args + ["--out", "b.csv"], capsys)[0] == 0
    assert (workdir / "a.csv").read_bytes() == (workdir / "b.csv").read_bytes()
    man = json.loads((workdir / "a.csv.manifest.json").read_text())
    assert len(man["seeds"]) == 2
    assert {o["path"] for o in man["outputs"]} == {"a.csv", "a.csv.meta.json"}

    rc, _, err = run(["clt", "--spec", "s.json", "--samples", "a.csv", "--json"], capsys)
    assert rc == 2 and "InsufficientESS" in err
    rc, out, _ = run(["clt", "--spec", "s.json", "--samples", "a.csv", "--min-ess", "1", "--json"], capsys)
    assert rc == 0 and json.loads(out)["n"] == 8
    rc, out, _ = run(["rigidity", "--spec", "s.json", "--samples", "a.csv", "--json"], capsys)
    assert rc == 0 and json.loads(out)["samples"] == 2 * 270


def test_end_to_end_theta2():
    rep = cli.end_to_end_report(EnsembleSpec(1, 4, theta=2), cli.oracle.PrecisionPolicy(), (8, 20))
    assert rep["checks"]["fit"]["pass"]
    assert rep["checks"]["equilibrium"]["pass"]
    assert rep["checks"]["kappa"]["pass"]
    assert set(rep["timings"]) == {"equilibrium", "constants", "oracle", "fit", "kappa"}


def test_report_theta1_golden(workdir, capsys):
    rc, out, _ = run(["report", "--spec", "s.json", "--json"], capsys)
    assert rc == 0
    rep = json.loads(out)
    assert rep["pass"]
    assert rep["checks"]["theta1_closed_form"]["pass"]
