from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from regnl.metrics import (CONSTANT_FACTOR, EvaluationInput, mape, weighted_error,
                           weighted_error_closed_form)

positive = st.floats(1e-3, 1e9, allow_nan=False, allow_infinity=False)
real = st.floats(-1e9, 1e9, allow_nan=False, allow_infinity=False)


@st.composite
def evaluation_inputs(draw, min_size=1, max_size=30):
    n = draw(st.integers(min_size, max_size))
    actual = draw(st.lists(positive, min_size=n, max_size=n))
    predicted = draw(st.lists(real, min_size=n, max_size=n))
    return EvaluationInput.from_arrays(actual, predicted)


def literal_form(actual, predicted):
    """Direct evaluation of the per-region product: relative error x share x 10."""
    national = sum(actual)
    return sum((abs(a - p) / a) * (a / national) * 10 for a, p in zip(actual, predicted))


def test_perfect_prediction_is_zero():
    report = weighted_error(EvaluationInput.from_arrays([5.0, 7.0], [5.0, 7.0]))
    assert report.total == 0.0


def test_single_region_ten_percent_low():
    report = weighted_error(EvaluationInput.from_arrays([200.0], [180.0]))
    assert report.total == pytest.approx(1.0, rel=1e-15)


def test_hand_case_is_exactly_one():
    # shares 0.25 and 0.75, relative errors 0.1 each: 0.25 + 0.75 = 1.0 = 10 * 40 / 400
    report = weighted_error(EvaluationInput.from_arrays([100.0, 300.0], [110.0, 270.0]))
    assert report.total == 1.0
    assert [t.contribution for t in report.terms] == pytest.approx([0.25, 0.75], rel=1e-15)
    assert weighted_error_closed_form([100.0, 300.0], [110.0, 270.0]) == 1.0


def test_report_fields():
    report = weighted_error(EvaluationInput(("a", "b"), np.array([100.0, 300.0]), np.array([110.0, 270.0])))
    assert report.constant_factor == CONSTANT_FACTOR == 10
    assert [t.region for t in report.terms] == ["a", "b"]
    assert math.fsum(t.weight for t in report.terms) == pytest.approx(1.0, rel=1e-15)
    assert [t.relative_error for t in report.terms] == pytest.approx([0.1, 0.1], rel=1e-14)


@pytest.mark.parametrize("actual", [[0.0], [-1.0], [5.0, 0.0]])
def test_non_positive_actual_rejected(actual):
    with pytest.raises(ValueError):
        EvaluationInput.from_arrays(actual, [1.0] * len(actual))


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        EvaluationInput.from_arrays([], [])


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        EvaluationInput.from_arrays([1.0, 2.0], [1.0])


def test_mape_examples():
    assert mape(EvaluationInput.from_arrays([3.0, 4.0], [3.0, 4.0])) == 0.0
    assert mape(EvaluationInput.from_arrays([10.0], [11.0])) == pytest.approx(0.1, rel=1e-14)
    assert mape(EvaluationInput.from_arrays([100.0, 300.0], [110.0, 270.0])) == pytest.approx(0.1, rel=1e-14)


@given(evaluation_inputs())
def test_identity_with_closed_form(data):
    total = weighted_error(data).total
    expected = 10 * math.fsum(np.abs(data.gdp_actual - data.gdp_predicted)) / math.fsum(data.gdp_actual)
    assert total == pytest.approx(expected, rel=1e-9, abs=1e-300)


@given(evaluation_inputs())
def test_matches_literal_form(data):
    total = weighted_error(data).total
    assert total == pytest.approx(literal_form(data.gdp_actual.tolist(), data.gdp_predicted.tolist()),
                                  rel=1e-9, abs=1e-300)


@given(evaluation_inputs(), st.floats(1e-3, 1e3))
def test_scale_invariance(data, k):
    scaled = EvaluationInput(data.regions, data.gdp_actual * k, data.gdp_predicted * k)
    assert weighted_error(scaled).total == pytest.approx(weighted_error(data).total, rel=1e-9, abs=1e-12)


@given(evaluation_inputs(), st.data())
def test_monotone_in_one_region_error(data, draw):
    i = draw.draw(st.integers(0, data.gdp_actual.size - 1))
    extra = draw.draw(st.floats(0.0, 1e6))
    a = data.gdp_actual[i]
    worse = data.gdp_predicted.copy()
    # move the prediction further from the actual on the side it already lies
    worse[i] = worse[i] + extra if worse[i] >= a else worse[i] - extra
    assume(np.isfinite(worse[i]))
    before = weighted_error(data).total
    after = weighted_error(EvaluationInput(data.regions, data.gdp_actual, worse)).total
    assert after >= before * (1 - 1e-12)


@given(evaluation_inputs())
def test_total_is_sum_of_contributions(data):
    report = weighted_error(data)
    assert report.total == math.fsum(t.contribution for t in report.terms)


def test_report_serializations(tmp_path):
    report = weighted_error(EvaluationInput(("a", "b"), np.array([100.0, 300.0]), np.array([110.0, 270.0])))
    report.write_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["total"] == 1.0 and len(doc["terms"]) == 2
    report.write_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader((tmp_path / "r.csv").open()))
    assert [r["region"] for r in rows] == ["a", "b"]
    assert math.fsum(float(r["contribution"]) for r in rows) == 1.0
