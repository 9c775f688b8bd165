from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from regnl import cli, ingest, runner
from regnl.metrics import EvaluationInput, weighted_error
from regnl.mlp import load_model

SMALL_MLP = {"epochs": 300, "learning_rate": 0.01}


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    """A built dataset for 6 synthetic regions, 2014Q1-2020Q4."""
    out = tmp_path_factory.mktemp("scenario")
    assert cli.main(["simulate", "--out", str(out), "--regions", "6", "--periods", "28",
                     "--disruption-period", "2020Q2", "--severity", "0.85", "--seed", "0"]) == 0
    config = out / "config.json"
    doc = json.loads(config.read_text())
    doc["mlp"] = SMALL_MLP
    config.write_text(json.dumps(doc))
    assert cli.main(["build-dataset", "--config", str(config)]) == 0
    return config


def run_dir(scenario, tmp_path, name="run"):
    """A config reusing the scenario's dataset but writing under ``tmp_path/name``."""
    doc = json.loads(scenario.read_text())
    doc["dataset"] = str(scenario.parent / "dataset.csv")
    doc["out"] = str(tmp_path / name)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(doc))
    return path


def test_simulate_writes_a_usable_config(scenario):
    doc = json.loads(scenario.read_text())
    assert doc["simulation"]["disruption_period"] == "2020Q2"
    for name in ("radiance", "gdp", "centroids", "deflators"):
        assert (scenario.parent / "data" / f"{name}.csv").is_file()
    records = ingest.parse_dataset_csv(scenario.parent / "dataset.csv")
    assert len(records) == 6 * 28


def test_fifty_regions_seven_years_give_1400_rows(tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path), "--noise", "0"]) == 0
    assert cli.main(["build-dataset", "--config", str(tmp_path / "config.json")]) == 0
    assert len(ingest.parse_dataset_csv(tmp_path / "dataset.csv")) == 1400
    assert (tmp_path / "coverage.json").is_file()
    with (tmp_path / "plots" / "nightlight_vs_gdp.csv").open() as fh:
        assert next(csv.reader(fh)) == ["region", "year", "period", "mean_nightlight", "gdp"]


def test_annual_build(tmp_path):
    assert cli.main(["simulate", "--out", str(tmp_path), "--frequency", "annual", "--periods", "7",
                     "--regions", "4"]) == 0
    assert cli.main(["build-dataset", "--config", str(tmp_path / "config.json"),
                     "--frequency", "annual"]) == 0
    records = ingest.parse_dataset_csv(tmp_path / "dataset.csv")
    assert len(records) == 28 and {r.period for r in records} == {"A"}


def test_train_is_byte_deterministic(scenario, tmp_path):
    for name in ("a", "b"):
        assert cli.main(["train", "--config", str(run_dir(scenario, tmp_path, name)),
                         "--model", "regnl", "--model", "linreg"]) == 0
    for f in ("regnl_full.json", "regnl_full_trace.csv", "regnl_full_scaler.json",
              "linreg_full.json"):
        assert (tmp_path / "a" / "models" / f).read_bytes() == (tmp_path / "b" / "models" / f).read_bytes()


def test_nightlight_features_give_one_input(scenario, tmp_path):
    assert cli.main(["train", "--config", str(run_dir(scenario, tmp_path)), "--model", "regnl",
                     "--features", "nightlight"]) == 0
    params, scaler, config = load_model(tmp_path / "run" / "models" / "regnl_nightlight.json")
    assert params.input_dim == config.input_dim == 1
    assert scaler.feature_names == ("mean_nightlight",)


def test_compare_report_recomputes_from_prediction_files(scenario, tmp_path, capsys):
    cfg_path = run_dir(scenario, tmp_path)
    assert cli.main(["compare", "--config", str(cfg_path)]) == 0
    text = capsys.readouterr().out
    assert "[published reference, not recomputed]" in text
    out = tmp_path / "run"
    report = json.loads((out / "reports" / "compare.json").read_text())
    assert [r["model"] for r in report["rows"]] == ["regnl", "arima", "linreg"]
    for row in report["rows"]:
        grouped = {}
        with (out / row["predictions"]).open() as fh:
            for rec in csv.DictReader(fh):
                label = f"{rec['year']}{rec['period']}"
                grouped.setdefault(label, ([], []))
                grouped[label][0].append(float(rec["actual"]))
                grouped[label][1].append(float(rec["predicted"]))
        assert set(grouped) == set(row["errors"]) and len(grouped) == 8
        for label, (actual, predicted) in grouped.items():
            assert row["errors"][label] == weighted_error(
                EvaluationInput.from_arrays(actual, predicted)).total
        assert row["average"] == math.fsum(row["errors"].values()) / 8
    # one plot table per test period with the documented columns
    assert len(report["plots"]) == 8
    with (out / report["plots"][5]).open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["region", "actual", "predicted_regnl", "predicted_arima"]
    assert len(rows) == 7 and all(cell for row in rows[1:] for cell in row)


def test_single_model_compare(scenario, tmp_path):
    assert cli.main(["compare", "--config", str(run_dir(scenario, tmp_path)), "--model", "linreg"]) == 0
    report = json.loads((tmp_path / "run" / "reports" / "compare.json").read_text())
    assert [r["model"] for r in report["rows"]] == ["linreg"]
    with (tmp_path / "run" / report["plots"][0]).open() as fh:
        header = next(csv.reader(fh))
    assert header == ["region", "actual", "predicted_regnl", "predicted_arima", "predicted_linreg"]


def test_perfect_predictions_score_zero(scenario, tmp_path):
    cfg = runner.ExperimentConfig.load(run_dir(scenario, tmp_path))
    row = runner.evaluate_model(cfg, "regnl", predict=lambda ds: ds.y.copy())
    assert set(row["errors"].values()) == {0.0}


def test_evaluate_writes_text_and_json(scenario, tmp_path, capsys):
    cfg_path = run_dir(scenario, tmp_path)
    assert cli.main(["train", "--config", str(cfg_path), "--model", "linreg"]) == 0
    capsys.readouterr()
    assert cli.main(["evaluate", "--config", str(cfg_path), "--model", "linreg"]) == 0
    assert "Weighted error per test period" in capsys.readouterr().out
    doc = json.loads((tmp_path / "run" / "reports" / "evaluate_linreg_full.json").read_text())
    assert len(doc["errors"]) == 8 and doc["references"]


# --- exit codes ------------------------------------------------------------------------

def test_evaluate_without_model_is_invalid(scenario, tmp_path, capsys):
    assert cli.main(["evaluate", "--config", str(run_dir(scenario, tmp_path))]) == cli.EXIT_INVALID
    assert "run train first" in capsys.readouterr().err


def test_diverged_training_exits_2(scenario, tmp_path, capsys):
    code = cli.main(["train", "--config", str(run_dir(scenario, tmp_path)), "--model", "regnl",
                     "--learning-rate", "1e6", "--epochs", "50"])
    assert code == cli.EXIT_FAILED
    assert "diverged" in capsys.readouterr().err


def test_empty_train_years_is_invalid(scenario, tmp_path):
    path = run_dir(scenario, tmp_path)
    doc = json.loads(path.read_text())
    doc["train_years"] = []
    path.write_text(json.dumps(doc))
    assert cli.main(["train", "--config", str(path)]) == cli.EXIT_INVALID


def test_missing_centroids_names_path(scenario, tmp_path, capsys):
    path = run_dir(scenario, tmp_path)
    missing = tmp_path / "nowhere" / "centroids.csv"
    assert cli.main(["build-dataset", "--config", str(path), "--centroids", str(missing)]) == 1
    assert str(missing) in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["train", "--features", "coordinates"], ["frobnicate"],
                                  ["train", "--config", "/nonexistent/config.json"],
                                  ["simulate", "--severity", "2", "--out", "unused"]])
def test_invalid_invocations_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as info:
        code = cli.main(argv)
        raise SystemExit(code)
    assert info.value.code == cli.EXIT_INVALID


def test_flags_override_config(scenario):
    args = cli.build_parser().parse_args(["train", "--config", str(scenario), "--seed", "7",
                                          "--epochs", "11"])
    cfg = cli.resolve_config(args)
    assert cfg.seed == 7 and cfg.mlp == {**SMALL_MLP, "epochs": 11}
    assert cfg.gdp == json.loads(scenario.read_text())["gdp"]


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"epochs": 5}))
    with pytest.raises(runner.ConfigError):
        runner.ExperimentConfig.load(path)


def test_arima_forecasts_cover_test_periods(scenario, tmp_path):
    cfg = runner.ExperimentConfig.load(run_dir(scenario, tmp_path))
    runner.train_arima(cfg)
    summaries = json.loads((tmp_path / "run" / "models" / "arima.json").read_text())
    assert len(summaries) == 6
    for s in summaries:
        assert s["forecast_periods"] == [f"{y}Q{q}" for y in (2019, 2020) for q in range(1, 5)]
        assert np.all(np.isfinite(s["forecasts"]))
