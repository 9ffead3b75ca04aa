import json

import pytest

from jetstab import cli
from jetstab.errors import NumericError


def read(path):
    return path.read_bytes()


def test_dispersion_csv(tmp_path):
    assert cli.dispatch(["dispersion", "--rho", "0.51", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "dispersion.csv").read_text().splitlines()
    assert lines[0] == "k,lambda_g,lambda_d"
    assert len(lines) == 82
    # 17 significant digits in scientific notation
    assert lines[1].split(",")[0] == "0.0000000000000000e+00"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["rho"] == 0.51
    assert manifest["version"] == "0.1.0"


def test_missing_key_exit_code(tmp_path, capsys):
    assert cli.dispatch(["dispersion", "--out", str(tmp_path)]) == 2
    assert "rho" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    assert cli.dispatch(["dispersion", "--rho", "0.51", "--set", "gravity=1", "--out", str(tmp_path)]) == 2
    assert "gravity" in capsys.readouterr().err


def test_invalid_physics_rejected(tmp_path):
    assert cli.dispatch(["dispersion", "--rho", "0.5", "--out", str(tmp_path)]) == 2
    assert cli.dispatch(["manifold", "--rho", "0.51", "--horizon", "4", "--out", str(tmp_path)]) == 2
    assert cli.dispatch(["simulate", "--rho", "0.51", "--n-modes", "48", "--out", str(tmp_path)]) == 2


def test_config_file_sections(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nrho = 0.34\n\n[dispersion]\nn_points = 3\n")
    out = tmp_path / "o"
    assert cli.dispatch(["dispersion", "--config", str(cfg), "--out", str(out)]) == 0
    assert len((out / "dispersion.csv").read_text().splitlines()) == 4
    bad = tmp_path / "bad.ini"
    bad.write_text("[physics]\nrho = 0.34\n")
    assert cli.dispatch(["dispersion", "--config", str(bad), "--out", str(out)]) == 2


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nrho = 0.34\n")
    out = tmp_path / "o"
    assert cli.dispatch(["dispersion", "--config", str(cfg), "--rho", "0.83", "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["rho"] == 0.83


def test_simulate_outputs_and_determinism(tmp_path):
    args = ["simulate", "--rho", "0.51", "--n-modes", "32", "--n-y", "16", "--t-end", "0.5",
            "--snapshot-stride", "5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.dispatch(args + ["--out", str(a)]) == 0
    assert cli.dispatch(args + ["--out", str(b)]) == 0
    for name in ("trajectory.jsonl", "diagnostics.csv", "manifest.json"):
        assert read(a / name) == read(b / name)
    rec = json.loads((a / "trajectory.jsonl").read_text().splitlines()[0])
    assert set(rec) == {"t", "eta", "psi", "diagnostics"}
    assert (a / "diagnostics.csv").read_text().splitlines()[0] == "t,delta_eta,h_s_norm,flux"


def test_scan_rows(tmp_path):
    out = tmp_path / "s"
    assert cli.dispatch(["scan", "--rho", "0.51", "--n-modes", "32", "--n-y", "24",
                         "--modes", "1,2", "--out", str(out)]) == 0
    lines = (out / "scan.csv").read_text().splitlines()
    assert lines[0] == "k,omega_measured,omega_rayleigh"
    assert len(lines) == 3
    k, om, orl = map(float, lines[1].split(","))
    assert k == 1.0 and om == pytest.approx(orl, rel=1e-3)
    assert float(lines[2].split(",")[1]) == 0.0


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("JETSTAB_THREADS", "0")
    assert cli.dispatch(["dispersion", "--rho", "0.51", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("JETSTAB_THREADS", "2")
    assert cli.dispatch(["dispersion", "--rho", "0.51", "--out", str(tmp_path)]) == 0


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    def boom(cfg, out, threads):
        raise NumericError("solver blew up")

    monkeypatch.setitem(cli.RUNNERS, "dispersion", boom)
    assert cli.dispatch(["dispersion", "--rho", "0.51", "--out", str(tmp_path)]) == 3
    assert json.loads((tmp_path / "manifest.json").read_text())["exit_code"] == 3


def test_center_nonconvergence_exit_code(tmp_path):
    out = tmp_path / "c"
    code = cli.dispatch(["center", "--rho", "0.51", "--horizon", "1.0", "--quad-dt", "0.2",
                         "--max-iter", "1", "--tol", "1e-30", "--out", str(out)])
    assert code == 4
    rep = json.loads((out / "center.json").read_text())
    assert rep["converged"] is False
    assert (out / "trajectory.csv").exists()


def test_paradiff_check_report(tmp_path):
    assert cli.dispatch(["paradiff-check", "--rho", "0.51", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "paradiff_check.json").read_text())
    assert rep["product_identity"] < 1e-12
    assert rep["constant_identity"] == 0.0


def test_help_exits_cleanly():
    assert cli.dispatch(["--help"]) == 0
    assert cli.dispatch(["nonsense"]) == 2
