from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest

from voxelvol import cli, estimators, imaging


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def disc_file(tmp_path):
    p = tmp_path / "disc.json"
    p.write_text(json.dumps({"variant": "ball", "r": 1.0, "center": [0.1, -0.2]}))
    return p


def test_classes(capsys, tmp_path):
    code, out, _ = _run(capsys, "classes", "--d", 2, "--format", "csv")
    assert code == 0 and len(out.strip().splitlines()) == 1 + 6
    code, out, _ = _run(capsys, "classes", "--d", 3)
    assert code == 0 and len(json.loads(out)["classes"]) == 22
    assert _run(capsys, "classes", "--d", 5)[0] == 2


def test_coeffs(capsys, disc_file):
    code, out, _ = _run(capsys, "coeffs", "--d", 3, "--mode", "mu", "--closed-form")
    assert code == 0
    rows = {r["class"]: r for r in csv.DictReader(io.StringIO(out))}
    assert float(rows["eta1"]["mu_bar"]) == pytest.approx(1.267949, abs=1e-6)
    assert _run(capsys, "coeffs", "--d", 2, "--mode", "phi")[0] == 2
    code, out, _ = _run(capsys, "coeffs", "--d", 2, "--mode", "lambda", "--phantom", disc_file)
    assert code == 0 and "lambda_bar" in out.splitlines()[0]


def test_voxelize_count_roundtrip(capsys, tmp_path, disc_file):
    img = tmp_path / "disc.bvox"
    code, _, err = _run(capsys, "voxelize", disc_file, "--a", 0.1, "--offset", "[0.25, 0.5]", "--output", img)
    assert code == 0 and json.loads(err)["command"] == "voxelize"
    code, out, _ = _run(capsys, "count", img, "--oracle")
    assert code == 0
    hist = imaging.ConfigHistogram.from_csv(out, 2)
    image = imaging.BinaryImage.read(img)
    assert image.pose.c.tolist() == [0.25, 0.5]
    assert hist == imaging.count_configurations(image)
    assert _run(capsys, "voxelize", disc_file, "--a", 0.1, "--margin", 0.05, "--output", img)[0] == 2
    assert _run(capsys, "count", tmp_path / "missing.bvox")[0] == 2


def test_estimate(capsys, tmp_path, disc_file):
    img = tmp_path / "disc.bvox"
    _run(capsys, "voxelize", disc_file, "--a", 0.05, "--output", img)
    w = tmp_path / "euler.json"
    w.write_text(estimators.euler_2d_weights().to_json())
    code, out, _ = _run(capsys, "estimate", img, w)
    assert code == 0 and float(out.strip()) == pytest.approx(1.0)
    assert _run(capsys, "estimate", img, tmp_path / "nope.json")[0] == 2
    w3 = tmp_path / "w3.json"
    w3.write_text(estimators.isotropic_3d_unbiased_weights().to_json())
    assert _run(capsys, "estimate", img, w3)[0] == 2


def _design(tmp_path, seed=3):
    p = tmp_path / "design.json"
    p.write_text(
        json.dumps(
            {
                "phantom": {"variant": "ball", "r": 1.0, "center": [0, 0]},
                "weights": json.loads(estimators.euler_2d_weights().to_json()),
                "mode": "isotropic",
                "spacings": [0.2, 0.1, 0.05],
                "replicates": 3,
                "seed": seed,
            }
        )
    )
    return p


def test_experiment(capsys, tmp_path):
    d = _design(tmp_path)
    outs = []
    for k in range(2):
        o = tmp_path / f"run{k}"
        code, _, _ = _run(capsys, "experiment", d, "--out-dir", o, "--threads", k + 1)
        assert code == 0
        outs.append([(o / n).read_text() for n in ("results.csv", "summary.csv", "fit.json")])
        manifest = json.loads((o / "manifest.json").read_text())
        assert manifest["tool"] == "voxelvol" and manifest["config"]["threads"] == k + 1
    assert outs[0] == outs[1]
    assert json.loads(outs[0][2])["c0"] == pytest.approx(1.0)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"mode": "isotropic"}))
    code, _, err = _run(capsys, "experiment", bad, "--out-dir", tmp_path / "bad")
    assert code == 2 and "missing" in err


def test_experiment_seed_flag_changes_poses(capsys, tmp_path):
    d = _design(tmp_path)
    _run(capsys, "experiment", d, "--out-dir", tmp_path / "a")
    _run(capsys, "experiment", d, "--out-dir", tmp_path / "b", "--seed", 99)
    m = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert m["result"]["design"]["seed"] == 99


def test_feasibility(capsys):
    code, out, _ = _run(capsys, "feasibility", "--d", 3)
    rep = json.loads(out)
    assert code == 0 and rep["verdict"] == "infeasible"
    assert rep["normalization_residual"] == pytest.approx(0.065, abs=1e-3)
    code, out, _ = _run(capsys, "feasibility", "--d", 2)
    assert json.loads(out)["solution"] == pytest.approx({"w1": 0.25, "w2": 0.0, "w3": -0.25})
    assert _run(capsys, "feasibility", "--d", 1)[0] == 2


def test_config_file_and_override(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"d": 2, "format": "csv"}))
    code, out, _ = _run(capsys, "classes", "--config", cfg)
    assert code == 0 and len(out.strip().splitlines()) == 7
    code, out, _ = _run(capsys, "classes", "--config", cfg, "--d", 3)
    assert len(out.strip().splitlines()) == 23
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run(capsys, "classes", "--config", cfg)[0] == 2


def test_threads_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("VOXELVOL_THREADS", "2")
    o = tmp_path / "env"
    assert _run(capsys, "experiment", _design(tmp_path), "--out-dir", o)[0] == 0
    monkeypatch.setenv("VOXELVOL_THREADS", "many")
    assert _run(capsys, "experiment", _design(tmp_path), "--out-dir", o)[0] == 2


def test_numeric_failure_exit_code(capsys):
    code, _, err = _run(capsys, "coeffs", "--d", 3, "--mode", "psi", "--tol", 1e-30)
    assert code == 3 and "error bound" in err
