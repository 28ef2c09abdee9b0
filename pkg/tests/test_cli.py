import json

import numpy as np
import pandas as pd
import pytest

from sbamdt.cli import (ConfigError, main, read_config_file, resolve_options)


def test_read_config_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(
        "# full-line comment\n"
        "\n"
        "n_iter = 40   # inline comment\n"
        "seed=7\n"
        "out = run1\n")
    got = read_config_file(p)
    assert got == {"n_iter": "40", "seed": "7", "out": "run1"}
    bad = tmp_path / "bad.cfg"
    bad.write_text("n_iter 40\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        read_config_file(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        read_config_file(tmp_path / "missing.cfg")


def test_resolve_options_layering(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("n_iter=40\nseed=1\n")
    cfg = resolve_options("fit", p, ["seed=2", "thin=3"], None, None)
    assert cfg["n_iter"] == 40          # from file
    assert cfg["seed"] == 2             # command line beats file
    assert cfg["thin"] == 3
    assert cfg["burn_in"] == 1500       # untouched default
    # --seed / --out shorthands beat everything
    cfg2 = resolve_options("fit", p, ["seed=2"], 9, "elsewhere")
    assert cfg2["seed"] == 9 and cfg2["out"] == "elsewhere"


def test_resolve_options_validation():
    with pytest.raises(ConfigError, match="unknown option"):
        resolve_options("fit", None, ["bogus=1"], None, None)
    with pytest.raises(ConfigError, match="KEY=value"):
        resolve_options("fit", None, ["justakey"], None, None)
    with pytest.raises(ConfigError, match="bad value"):
        resolve_options("fit", None, ["n_iter=abc"], None, None)
    with pytest.raises(ConfigError, match="bad value"):
        resolve_options("predict", None, ["include_noise=maybe"], None, None)
    cfg = resolve_options("predict", None, ["include_noise=off"], None, None)
    assert cfg["include_noise"] is False
    cfg = resolve_options("fit", None, ["soft_levels=0.5, 1, 2"], None, None)
    assert cfg["soft_levels"] == (0.5, 1.0, 2.0)
    assert resolve_options("fit", None, ["lambda=0.2"], None, None)["lambda"] == 0.2


def test_main_error_paths(tmp_path, capsys):
    assert main(["fit"]) == 1                        # train_csv required
    assert main(["nonsense"]) == 1                   # unknown subcommand
    assert main([]) == 1                             # missing subcommand
    assert main(["fit", "train_csv=/nope/missing.csv"]) == 1
    assert main(["simulate", "scenario=pentagon",
                 "--out", str(tmp_path / "x")]) == 1
    assert main(["fit", "bogus=1"]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def test_full_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    model = tmp_path / "model"
    pred = tmp_path / "pred"
    report = tmp_path / "report"
    diag = tmp_path / "diag"

    assert main(["simulate", "scenario=square", "n_train=60", "n_test=20",
                 "--seed", "3", "--out", str(data)]) == 0
    assert (data / "train.csv").exists() and (data / "test.csv").exists()
    train_rows = pd.read_csv(data / "train.csv")
    assert len(train_rows) == 60
    assert {"s_1", "s_2", "x_1", "x_2", "y", "f_true"} <= set(train_rows.columns)

    assert main(["fit", f"train_csv={data / 'train.csv'}", "n_iter=60",
                 "burn_in=20", "thin=4", "n_trees=4", "n_knots=20",
                 "--seed", "1", "--out", str(model)]) == 0
    assert (model / "header.json").exists()
    header = json.loads((model / "header.json").read_text())
    assert header["format"] == "sbamdt-model/1"
    assert header["n_iter"] == 60
    n_lines = sum(1 for l in (model / "snapshots.ndjson").read_text().splitlines()
                  if l.strip())
    assert n_lines == 10
    out = capsys.readouterr().out
    assert "10 snapshots" in out

    assert main(["predict", f"model_dir={model}",
                 f"data_csv={data / 'test.csv'}", "include_noise=false",
                 "--out", str(pred)]) == 0
    frame = pd.read_csv(pred / "predictions.csv")
    assert list(frame.columns) == ["id", "mean", "sd", "q05", "q95"]
    assert len(frame) == 20
    assert np.all(np.isfinite(frame["mean"]))

    assert main(["report", f"model_dir={model}",
                 f"test_csv={data / 'test.csv'}", "--out", str(report)]) == 0
    rep = json.loads((report / "metrics.json").read_text())
    assert rep["target"] == "f_true"
    assert rep["n_test"] == 20 and rep["n_states"] == 10
    assert rep["rmspe"] > 0 and rep["crps"] > 0
    for name in ("metrics.csv", "predictions.csv", "importance.csv",
                 "pred_vs_truth.png", "importance.png", "residuals.png"):
        f = report / name
        assert f.exists() and f.stat().st_size > 0
    imp = pd.read_csv(report / "importance.csv")
    assert imp["feature"].tolist() == ["structured", "x_1", "x_2"]

    assert main(["diag", f"train_csv={data / 'train.csv'}", "n_draws=4000",
                 "n_diag_points=3", "--seed", "2", "--out", str(diag)]) == 0
    payload = json.loads((diag / "diag.json").read_text())
    assert set(payload) == {"prior_given_structure_and_codes",
                            "prior_given_structure"}
    for rep in payload.values():
        assert rep["within_3se"] is True
        assert rep["psd"] is True
        assert len(rep["analytic"]) == 3


def test_report_without_truth_targets_response(tmp_path, capsys):
    data = tmp_path / "d"
    model = tmp_path / "m"
    assert main(["simulate", "scenario=square", "n_train=50", "n_test=15",
                 "--out", str(data)]) == 0
    frame = pd.read_csv(data / "test.csv").drop(columns=["f_true"])
    stripped = tmp_path / "test_no_truth.csv"
    frame.to_csv(stripped, index=False)
    assert main(["fit", f"train_csv={data / 'train.csv'}", "n_iter=30",
                 "burn_in=10", "n_trees=3", "n_knots=15",
                 "--out", str(model)]) == 0
    capsys.readouterr()
    assert main(["report", f"model_dir={model}", f"test_csv={stripped}",
                 "--out", str(tmp_path / "rep")]) == 0
    assert "target=y" in capsys.readouterr().out


def test_predict_requires_model(tmp_path):
    assert main(["predict", f"model_dir={tmp_path}",
                 "data_csv=whatever.csv"]) == 1


def test_s2_fit_and_diag(tmp_path):
    data = tmp_path / "d"
    assert main(["simulate", "scenario=square", "n_train=40", "n_test=5",
                 "--out", str(data)]) == 0
    model = tmp_path / "m2"
    assert main(["fit", f"train_csv={data / 'train.csv'}", "variant=s2",
                 "n_iter=30", "burn_in=10", "n_trees=3", "n_knots=12",
                 "--out", str(model)]) == 0
    header = json.loads((model / "header.json").read_text())
    assert header["variant"] == "s2"
    assert main(["diag", f"train_csv={data / 'train.csv'}", "variant=s2",
                 "n_draws=3000", "--out", str(tmp_path / "dg")]) == 0
