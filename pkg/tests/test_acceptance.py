"""Acceptance suite: the seven headline criteria, each at its stated tolerance
and runtime budget. Every test prints one ``PASS``/``FAIL`` line."""
from __future__ import annotations

import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from regnl import arima, ingest, mlp, runner
from regnl.metrics import EvaluationInput, weighted_error

from _gradcheck import max_relative_error

# Settings for the synthetic nowcast. Dropout is off: at 2e5 epochs the
# dropout noise keeps the full-feature error near 1.8 on this scenario.
NOWCAST_MLP = {"epochs": 200_000, "learning_rate": 3e-2, "weight_decay": 1e-4,
               "dropout_rate": 0.0}
SCENARIO = {"n_regions": 50, "n_periods": 28, "noise": 0.01, "disruption_period": "2020Q2",
            "severity": 0.85}
DISRUPTION = "2020Q2"  # sixth of the eight test quarters 2019Q1..2020Q4


@contextmanager
def criterion(capsys, number: int, title: str, budget_s: float, spent_s: float = 0.0):
    """Run one criterion; print a PASS/FAIL line including its runtime."""
    notes: list[str] = []
    start = time.perf_counter()
    try:
        yield notes
        elapsed = spent_s + time.perf_counter() - start
        if elapsed >= budget_s:
            raise AssertionError(f"runtime {elapsed:.1f}s exceeds {budget_s:.0f}s")
    except BaseException as exc:
        elapsed = spent_s + time.perf_counter() - start
        with capsys.disabled():
            print(f"\nACCEPTANCE {number} FAIL  {title} ({elapsed:.1f}s): {exc}")
        raise
    with capsys.disabled():
        detail = f" [{'; '.join(notes)}]" if notes else ""
        print(f"\nACCEPTANCE {number} PASS  {title} ({elapsed:.1f}s){detail}")


def _config(out: Path, **extra) -> runner.ExperimentConfig:
    cfg = runner.ExperimentConfig(out=str(out), seed=0, **extra)
    runner.cmd_simulate(cfg)
    cfg = runner.simulated_config(cfg)
    runner.cmd_build_dataset(cfg)
    return cfg


# --- 1 ---------------------------------------------------------------------------------

def test_criterion_1_weighted_error_identity(capsys):
    with criterion(capsys, 1, "weighted error identity on 1000 inputs + hand case", 1.0) as notes:
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(1, 60))
            actual = rng.uniform(1e3, 3e6, n)
            predicted = actual * rng.uniform(0.0, 2.0, n) + rng.normal(0, 1e4, n)
            total = weighted_error(EvaluationInput.from_arrays(actual, predicted)).total
            expected = 10 * math.fsum(np.abs(actual - predicted)) / math.fsum(actual)
            worst = max(worst, abs(total - expected) / expected)
        assert worst <= 1e-9, f"max relative deviation {worst:.2e}"
        hand = weighted_error(EvaluationInput.from_arrays([100.0, 300.0], [110.0, 270.0])).total
        assert hand == 1.0, f"hand case gave {hand!r}"
        notes.append(f"max rel dev {worst:.1e}")


# --- 2 ---------------------------------------------------------------------------------

def test_criterion_2_gradient_check(capsys):
    with criterion(capsys, 2, "gradient check, 100 seeds, 8x16 network, h=1e-5", 30.0) as notes:
        results = [max_relative_error(seed) for seed in range(100)]
        worst = max(r[0] for r in results)
        skipped = sum(r[2] for r in results)
        assert worst < 1e-4, f"max relative error {worst:.2e}"
        notes.append(f"max rel err {worst:.1e}, {sum(r[1] for r in results)} entries, "
                     f"{skipped} kink-crossing entries skipped")


# --- 3 and 4 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def nowcast(tmp_path_factory):
    """Simulated disruption scenario with both ReGNL feature sets trained."""
    start = time.perf_counter()
    out = tmp_path_factory.mktemp("nowcast")
    cfg = _config(out, simulation=dict(SCENARIO), mlp=dict(NOWCAST_MLP))
    rows = {}
    for features in ("full", "nightlight"):
        c = cfg.with_overrides(features=features)
        runner.train_regnl(c)
        rows[features] = runner.evaluate_model(c, "regnl")
    return cfg, rows, time.perf_counter() - start


def test_criterion_3_synthetic_nowcast(capsys, nowcast):
    cfg, rows, spent = nowcast
    with criterion(capsys, 3, "synthetic nowcast, full features <= 1.0 and beat nightlight-only",
                   300.0, spent) as notes:
        full, light = rows["full"]["errors"], rows["nightlight"]["errors"]
        assert list(full) == [f"{y}Q{q}" for y in (2019, 2020) for q in range(1, 5)]
        worst = max(full.values())
        assert worst <= 1.0, f"full-feature errors {full}"
        wins = sum(full[p] <= light[p] for p in full)
        assert wins >= 7, f"full <= nightlight-only in {wins}/8 periods ({full} vs {light})"
        notes.append(f"full max {worst:.3f} ({DISRUPTION}: {full[DISRUPTION]:.3f}), "
                     f"nightlight-only avg {rows['nightlight']['average']:.3f}, wins {wins}/8")


def test_criterion_4_disruption_comparison(capsys, nowcast):
    cfg, rows, _ = nowcast
    with criterion(capsys, 4, "ARIMA error exceeds ReGNL's in the disruption quarter", 120.0) as notes:
        runner.train_arima(cfg)
        arima_row = runner.evaluate_model(cfg, "arima")
        a, r = arima_row["errors"][DISRUPTION], rows["full"]["errors"][DISRUPTION]
        assert a > r, f"ARIMA {a:.4f} vs ReGNL {r:.4f} in {DISRUPTION}"
        notes.append(f"{DISRUPTION}: ARIMA {a:.3f} > ReGNL {r:.3f}")


# --- 5 ---------------------------------------------------------------------------------

def test_criterion_5_arima_recovery(capsys):
    with criterion(capsys, 5, "ARIMA AR(1) recovery, random-walk d selection, flat forecast",
                   60.0) as notes:
        phis = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            e = rng.standard_normal(400)
            x = np.zeros(400)
            for t in range(1, 400):
                x[t] = 0.7 * x[t - 1] + e[t]
            phis.append(arima.fit(x[200:], (1, 0, 0)).ar_coeffs[0])
        mean_phi = float(np.mean(phis))
        assert 0.6 <= mean_phi <= 0.8, f"mean phi-hat {mean_phi:.4f}"
        hits = 0
        for seed in range(50):
            walk = np.cumsum(np.random.default_rng(1000 + seed).standard_normal(200))
            hits += arima.select_order(walk)[0].d == 1
        assert hits >= 40, f"d = 1 chosen for {hits}/50 random walks"
        walk = 100.0 + np.cumsum(np.random.default_rng(7).standard_normal(60))
        flat = arima.forecast(arima.fit(walk, (0, 1, 0)), walk, 8)
        assert flat.tolist() == [walk[-1]] * 8
        notes.append(f"mean phi-hat {mean_phi:.4f}, d=1 in {hits}/50")


# --- 6 ---------------------------------------------------------------------------------

def _pipeline(out: Path) -> Path:
    cfg = _config(out, simulation={"n_regions": 12, "n_periods": 28, "noise": 0.01,
                                   "disruption_period": "2020Q2", "severity": 0.85},
                  mlp={"epochs": 3000})
    runner.cmd_train(cfg)
    runner.cmd_evaluate(cfg, "regnl")
    runner.cmd_compare(cfg)
    return out


def _artifacts(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_6_determinism_and_round_trips(capsys, tmp_path):
    with criterion(capsys, 6, "byte-identical reruns; dataset CSV and model JSON round-trips",
                   120.0) as notes:
        first, second = _artifacts(_pipeline(tmp_path / "a")), _artifacts(_pipeline(tmp_path / "b"))
        assert first.keys() == second.keys()
        differing = [name for name in first if first[name] != second[name]]
        assert not differing, f"files differ between runs: {differing}"
        assert any(n.startswith("models/") for n in first) and any(n.startswith("reports/") for n in first)

        dataset = tmp_path / "a" / "dataset.csv"
        records = ingest.parse_dataset_csv(dataset)
        rewritten = ingest.write_dataset_csv(records, tmp_path / "dataset_again.csv")
        assert rewritten.read_bytes() == dataset.read_bytes()
        assert ingest.parse_dataset_csv(rewritten) == records

        model = tmp_path / "a" / "models" / "regnl_full.json"
        params, scaler, config = mlp.load_model(model)
        again = mlp.save_model(params, scaler, config, tmp_path / "model_again.json")
        assert again.read_bytes() == model.read_bytes()
        p2, s2, c2 = mlp.load_model(again)
        assert p2.equals(params) and s2 == scaler and c2 == config
        notes.append(f"{len(first)} artifacts compared")


# --- 7 ---------------------------------------------------------------------------------

def test_criterion_7_ingest_conformance(capsys, csv_file, tmp_path):
    with criterion(capsys, 7, "California row survives parse-join-write-parse; -2.0 rejected",
                   1.0) as notes:
        radiance = csv_file("radiance.csv", ingest.RADIANCE_HEADER,
                            [["California", 2014, m, "1.4385"] for m in (1, 2, 3)])
        gdp = csv_file("gdp.csv", ingest.GDP_HEADER,
                       [["California", 2014, "Q1", "2252602.814", ingest.DEFAULT_BASE_YEAR]])
        centroids = csv_file("centroids.csv", ingest.CENTROID_HEADER,
                             [["California", "37.2453", "-119.6081"]])
        deflators = csv_file("deflators.csv", ingest.DEFLATOR_HEADER,
                             [[ingest.DEFAULT_BASE_YEAR, "1.0"], [2014, "1.05"]])
        records, _ = ingest.build_dataset(radiance, gdp, centroids, deflators)
        expected = ingest.RegionQuarterRecord("California", 2014, "Q1", 37.2453, -119.6081,
                                              1.4385, 2252602.814)
        assert records == [expected], records
        path = ingest.write_dataset_csv(records, tmp_path / "dataset.csv")
        assert ingest.parse_dataset_csv(path) == [expected]
        assert "California,2014,Q1,37.2453,-119.6081,1.4385,2252602.814" in path.read_text()

        bad = csv_file("bad.csv", ingest.RADIANCE_HEADER, [["California", 2014, 1, "-2.0"]])
        with pytest.raises(ingest.ValidationError, match="-2.0"):
            ingest.parse_radiance_csv(bad)
        notes.append("row unchanged; -2.0 rejected")
