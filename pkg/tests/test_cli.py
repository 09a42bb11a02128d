import json

import numpy as np
import pytest

from lpvce import geometry
from lpvce.cli import main, parse_args
from lpvce.io import load_model, load_png, save_model, save_png


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, trained, blobs):
    d = tmp_path_factory.mktemp("cli")
    save_model(trained, d / "m.bin")
    save_png(d / "x.png", blobs.X[0], (8, 8, 1))
    return d


def test_train_and_calibrate(tmp_path, capsys):
    m = tmp_path / "m.bin"
    assert main(["train", "--model", str(m), "--epochs", "3", "--n-per-class", "20",
                 "--hidden", "8", "--out", str(tmp_path), "--export-samples", "2"]) == 0
    report = json.loads((tmp_path / "train_report.json").read_text())
    assert len(report["loss_history"]) == 3
    assert len(list((tmp_path / "samples").glob("*.png"))) == 2
    assert main(["calibrate", "--model", str(m), "--n-per-class", "20", "--label-noise", "0.2",
                 "--out", str(tmp_path)]) == 0
    cal = json.loads((tmp_path / "calibration.json").read_text())
    assert cal["ece_after"] <= cal["ece_before"]
    assert load_model(m).temperature == cal["temperature"]


def test_vce_writes_outputs(workspace, tmp_path):
    args = ["vce", "--model", str(workspace / "m.bin"), "--image", str(workspace / "x.png"),
            "--eps", "1.0", "--iters", "20", "--restarts", "2", "--out", str(tmp_path)]
    assert main(args) == 0
    rec = json.loads((tmp_path / "result.json").read_text())
    cf = np.array(rec["counterfactual"])
    x0 = np.array(rec["original"])
    assert geometry.lp_norm(cf - x0, 1.5) <= 1.0 * (1 + 1e-9)
    assert load_png(tmp_path / "cf.png").shape == (8, 8, 1)
    assert (tmp_path / "diff.png").exists()
    assert main(args + ["--mode", "penalized", "--lam", "0.5", "--p", "2"]) == 0


def test_sweep(workspace, tmp_path):
    assert main(["sweep", "--model", str(workspace / "m.bin"), "--image",
                 str(workspace / "x.png"), "--radii", "0.5,1,2", "--iters", "10",
                 "--restarts", "1", "--out", str(tmp_path)]) == 0
    recs = json.loads((tmp_path / "sweep.json").read_text())
    ends = [r["p_end"] for r in recs]
    assert ends == sorted(ends)
    assert load_png(tmp_path / "panel.png").shape == (8, 8 * 4 + 3, 1)
    assert main(["sweep", "--model", str(workspace / "m.bin"), "--image",
                 str(workspace / "x.png"), "--radii", "2,1", "--out", str(tmp_path)]) == 1


def test_bench_and_metrics(workspace, tmp_path, capsys):
    assert main(["bench", "--model", str(workspace / "m.bin"), "--n", "2", "--budgets", "5",
                 "--constant-grid", "0.5", "--decaying-grid", "5", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert len(lines) == 1 + 1 + 3
    a = np.zeros((4, 4))
    b = a.copy()
    b[1, 1] = 0.5
    save_png(tmp_path / "a.png", a)
    save_png(tmp_path / "b.png", b)
    mask = np.zeros((4, 4))
    mask[1, 1] = 1
    save_png(tmp_path / "mask.png", mask)
    assert main(["metrics", "--original", str(tmp_path / "a.png"), "--counterfactual",
                 str(tmp_path / "b.png"), "--mask", str(tmp_path / "mask.png"),
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "metrics.json").read_text())
    assert rep == {"expected_distance": 0.0, "mass_in_mask": 1.0, "iou_at_095": 1.0}
    assert main(["metrics", "--original", str(tmp_path / "a.png"), "--counterfactual",
                 str(tmp_path / "a.png"), "--mask", str(tmp_path / "mask.png"),
                 "--out", str(tmp_path)]) == 1


def test_oracle_check_deterministic(capsys):
    assert main(["oracle-check", "--trials", "30", "--seed", "3"]) == 0
    first = capsys.readouterr().out
    assert main(["oracle-check", "--trials", "30", "--seed", "3"]) == 0
    assert capsys.readouterr().out == first
    assert "30/30 pass, 0 fail" in first


def test_scaling(tmp_path, capsys):
    assert main(["scaling", "--dims", "100,1000", "--trials", "2", "--out", str(tmp_path)]) == 0
    assert "slope" in capsys.readouterr().out


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"trials": 7, "seed": 4}))
    args = parse_args(["oracle-check", "--config", str(cfg)])
    assert args.trials == 7 and args.seed == 4
    args = parse_args(["oracle-check", "--config", str(cfg), "--trials", "9"])
    assert args.trials == 9 and args.seed == 4
    assert parse_args(["oracle-check"]).trials == 1000


def test_bad_inputs_exit_nonzero(tmp_path, workspace, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["oracle-check", "--config", str(cfg)]) != 0
    cfg.write_text("[1, 2]")
    assert main(["oracle-check", "--config", str(cfg)]) != 0
    assert main(["vce", "--model", str(tmp_path / "missing"), "--image",
                 str(workspace / "x.png")]) != 0
    assert main(["vce", "--model", str(workspace / "m.bin"), "--image",
                 str(workspace / "x.png"), "--p", "1.5", "--method", "apgd"]) != 0
    assert main(["scaling", "--tol", "NOPE=1"]) != 0
    assert main(["nonsense"]) != 0
    assert "error" in capsys.readouterr().err


def test_tolerance_override_is_restored(tmp_path):
    before = geometry.FEASIBILITY_RTOL
    assert main(["scaling", "--dims", "10,20", "--trials", "1", "--tol",
                 "FEASIBILITY_RTOL=1e-6", "--out", str(tmp_path)]) == 0
    assert geometry.FEASIBILITY_RTOL == before


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LPVCE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["scaling", "--dims", "10,20", "--trials", "1"]) == 0
    assert (tmp_path / "env" / "scaling.json").exists()
