from __future__ import annotations

import filecmp

import numpy as np
import pytest

from regnl import ingest
from regnl.simulate import SimulationSpec, gdp_function, simulate, write_simulation


def test_noiseless_gdp_is_the_link_function():
    data = simulate(SimulationSpec(n_regions=7, n_periods=12, noise=0.0, seed=3))
    for r in data.records:
        assert r.gdp == float(gdp_function(r.mean_nightlight, r.latitude, r.longitude))


def test_disruption_scales_national_gdp():
    base = SimulationSpec(n_regions=50, n_periods=28, noise=0.01, seed=1)
    hit = SimulationSpec(n_regions=50, n_periods=28, noise=0.01, seed=1, disruption_period=25,
                         severity=0.9)
    calm, shocked = simulate(base).national_gdp(), simulate(hit).national_gdp()
    # same draws, so every other period is untouched and period 25 is 0.9x
    np.testing.assert_array_equal(np.delete(shocked, 25), np.delete(calm, 25))
    assert shocked[25] / calm[25] == pytest.approx(0.9, rel=1e-12)
    # and against the local trend of its neighbours
    trend = 0.5 * (shocked[24] + shocked[26])
    assert shocked[25] / trend == pytest.approx(0.9, abs=0.02)


def test_disruption_preserves_the_link():
    data = simulate(SimulationSpec(n_regions=5, n_periods=8, noise=0.0, disruption_period=3,
                                   severity=0.5, seed=2))
    for r in data.records:
        assert r.gdp == float(gdp_function(r.mean_nightlight, r.latitude, r.longitude))


@pytest.mark.parametrize("kwargs", [dict(severity=0.0), dict(severity=1.5), dict(noise=-0.1),
                                    dict(n_regions=0), dict(disruption_period=28),
                                    dict(frequency="monthly")])
def test_invalid_spec_rejected(kwargs):
    with pytest.raises(ValueError):
        SimulationSpec(**kwargs)


def test_period_labels():
    spec = SimulationSpec()
    assert spec.period_index("2020Q2") == 25
    assert spec.period_label(25) == (2020, "Q2")
    assert SimulationSpec(frequency="annual", n_periods=7).period_index("2019") == 5
    with pytest.raises(ValueError):
        spec.period_index("2030Q1")


def test_files_are_deterministic_and_rebuild_the_truth(tmp_path):
    spec = SimulationSpec(n_regions=4, n_periods=8, seed=5)
    a = write_simulation(simulate(spec), tmp_path / "a")
    b = write_simulation(simulate(spec), tmp_path / "b")
    for name in a:
        assert filecmp.cmp(a[name], b[name], shallow=False)
    records, coverage = ingest.build_dataset(a["radiance"], a["gdp"], a["centroids"],
                                             a["deflators"], "quarterly")
    truth = {(r.region_id, r.year, r.period): r for r in simulate(spec).records}
    assert len(records) == len(truth) == 32
    for r in records:
        t = truth[(r.region_id, r.year, r.period)]
        assert r.mean_nightlight == t.mean_nightlight
        assert r.gdp == pytest.approx(t.gdp, rel=1e-12)


def test_annual_frequency(tmp_path):
    spec = SimulationSpec(n_regions=3, n_periods=4, frequency="annual", seed=0)
    paths = write_simulation(simulate(spec), tmp_path)
    records, _ = ingest.build_dataset(paths["radiance"], paths["gdp"], paths["centroids"],
                                      paths["deflators"], "annual")
    assert {r.period for r in records} == {"A"} and len(records) == 12
