import csv
import json
import subprocess
import sys

import pytest

from friedlab import __version__
from friedlab.cli import main

QUICK = ["--kind", "laplacian", "--domain", "square", "--h", "0.25", "--n-max", "4"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_mesh_then_solve(tmp_path, capsys):
    mfile = tmp_path / "m.json"
    assert main(["mesh", "--domain", "lshape", "--h", "0.25", "--out", str(mfile)]) == 0
    code, out, _ = run(["solve", "--mesh", str(mfile), "--kind", "stokes", "--bc", "dirichlet",
                        "--m", "3"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert set(doc) >= {"kind", "bc", "alpha", "mesh_h", "ndof", "eigenvalues", "residuals", "metadata"}
    assert len(doc["eigenvalues"]) == 3
    meta = doc["metadata"]
    assert meta["version"] == __version__
    assert meta["config"]["mesh"] == str(mfile)
    assert len(meta["mesh_sha256"]) == 64
    assert meta["tolerances"]["resonance_rtol"] == 1e-8


def test_verify_acceptance_example(capsys):
    code, out, _ = run(["verify", "--kind", "laplacian", "--domain", "square", "--h", "0.0625",
                        "--n-max", "10"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["verdict"] is True and len(doc["gaps"]) == 10 and len(doc["error_estimates"]) == 10
    assert "runtime" not in doc


def test_unknown_flag(capsys):
    code, _, err = run(["solve", "--bogus"], capsys)
    assert code == 1
    assert "usage" in err


def test_missing_command(capsys):
    assert run([], capsys)[0] == 1


def test_console_script_unknown_flag():
    p = subprocess.run([sys.executable, "-m", "friedlab.cli", "verify", "--nope"],
                       capture_output=True, text=True)
    assert p.returncode == 1 and "usage" in p.stderr


def test_verify_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["verify", *QUICK, "--out", str(a)]) == 0
    assert main(["verify", *QUICK, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seventeen_digits(capsys):
    _, out, _ = run(["solve", "--h", "0.5", "--m", "3"], capsys)
    val = json.loads(out)["eigenvalues"][2]
    assert repr(val) in out or format(val, ".17g") in out


def test_config_merge_flags_win(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nkind = stokes\nh = 0.5\nm = 2\nalpha = 1\n")
    code, out, _ = run(["solve", "--config", str(cfg), "--m", "4"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "stokes" and doc["alpha"] == 1.0 and doc["mesh_h"] == 0.5
    assert len(doc["eigenvalues"]) == 4


def test_config_bad_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("kind = laplacian\nfrobnicate = 3\n")
    code, _, err = run(["solve", "--config", str(cfg)], capsys)
    assert code == 1 and "frobnicate" in err


def test_config_bad_value(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("kind = maxwell\n")
    assert run(["solve", "--config", str(cfg)], capsys)[0] == 1


def test_verdict_failure_exit_2(capsys):
    code, out, _ = run(["verify", *QUICK, "--margin-factor", "1e9"], capsys)
    assert code == 2
    assert json.loads(out)["verdict"] is False


def test_out_dir_env_and_csv(tmp_path, monkeypatch):
    monkeypatch.setenv("FRIEDLAB_OUTPUT_DIR", str(tmp_path))
    assert main(["verify", *QUICK, "--out", "r.json", "--csv", "r.csv", "--timings"]) == 0
    assert "runtime" in json.loads((tmp_path / "r.json").read_text())
    rows = list(csv.reader((tmp_path / "r.csv").open()))
    assert rows[0] == ["index", "lambda_N", "lambda_D", "gap", "error_estimate"] and len(rows) == 5


def test_out_dir_flag_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv("FRIEDLAB_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["mesh", "--h", "0.5", "--out", "m.json", "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "m.json").exists()
    assert not (tmp_path / "env").exists()


def test_sweep_and_dtn(capsys):
    code, out, _ = run(["sweep", "--h", "0.5", "--mu-grid", "log:0:6:5", "--m", "3", "--jobs", "2"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert doc["grid"][0] == -1.0 and len(doc["grid"]) == 5 and doc["verdict"] is True
    code, out, _ = run(["dtn", "--h", "0.25", "--lambdas", "0,10,30"], capsys)
    assert code == 0 and json.loads(out)["verdict"] is True


def test_study(capsys):
    code, out, _ = run(["study", "--bc", "dirichlet", "--h-list", "0.5,0.25,0.125",
                        "--exact", "19.739208802178716"], capsys)
    assert code == 0
    assert len(json.loads(out)["orders"]) == 2


@pytest.mark.parametrize("argv", [["solve", "--h", "-1"], ["solve", "--mesh", "/nonexistent.json"],
                                  ["sweep", "--mu-grid", "1,0"], ["study", "--h-list", "0.1,0.2,0.05"]])
def test_errors_exit_1(argv, capsys):
    assert run(argv, capsys)[0] == 1
