import json

import pytest

from kpilab.cli import main


CONFIG = """\
experiment: picard
grid: {nx: 32, ny: 32, Lx: 8.0, Ly: 8.0}
data: {kind: gaussian, amplitude: 1.0e-3}
solver: {dt: 0.02, T: 0.1, check_margin: false}
amplitudes: [1.0e-3]
n_iters: 2
"""


def test_run_and_report(tmp_path, capsys):
    cfg = tmp_path / "picard.yaml"
    cfg.write_text(CONFIG)
    out = tmp_path / "run"
    rc = main(["run", "picard", "--config", str(cfg), "--out", str(out)])
    captured = capsys.readouterr().out
    assert rc == 0
    assert "picard: PASS" in captured
    assert (out / "DONE").exists()

    rc = main(["report", str(out)])
    report = capsys.readouterr().out
    assert rc == 0
    assert "verdict: PASS" in report
    assert "experiment: picard" in report


def test_run_experiment_mismatch(tmp_path, capsys):
    cfg = tmp_path / "picard.yaml"
    cfg.write_text(CONFIG)
    rc = main(["run", "gain", "--config", str(cfg)])
    assert rc == 2
    assert "declares experiment" in capsys.readouterr().err


def test_validate_weight_json(tmp_path, capsys):
    rc = main(["validate-weight", "--sigma", "0.5", "--i", "1", "--k", "0"])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["ok"] is True
    assert report["c1"] > 0


def test_validate_weight_artifact(tmp_path, capsys):
    out = tmp_path / "w"
    rc = main(["validate-weight", "--sigma", "0.5", "--i", "1", "--k", "0",
               "--out", str(out)])
    assert rc == 0
    assert (out / "DONE").exists()
    header = (out / "series.csv").read_text().splitlines()[0]
    assert header.split(",")[:2] == ["x", "f"]


def test_check_identities(tmp_path, capsys):
    out = tmp_path / "ident"
    rc = main(["check", "identities", "--alpha", "1,0", "--nx", "256",
               "--T", "0.2", "--dt", "5e-3", "--record-every", "10",
               "--tol", "5e-3", "--out", str(out)])
    captured = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in captured
    header = (out / "series.csv").read_text().splitlines()[0]
    assert header == "t,dA,B,C,D,E,residual"
    assert len(list((out / "fields").glob("*.bin"))) == 2
