from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regnl.baselines import DegenerateSystemError, LinearModel, linreg_predict, ols_fit


def test_noiseless_line():
    x = np.linspace(0, 1, 11)[:, None]
    model = ols_fit(x, 2 * x[:, 0] + 1)
    assert model.coefficients[0] == pytest.approx(2, abs=1e-8)
    assert model.intercept == pytest.approx(1, abs=1e-8)


def test_constant_target():
    X = np.random.default_rng(0).random((20, 3))
    model = ols_fit(X, np.full(20, 4.5))
    np.testing.assert_allclose(model.coefficients, 0, atol=1e-8)
    assert model.intercept == pytest.approx(4.5, abs=1e-8)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_residual_orthogonality(seed, k):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, k))
    y = rng.standard_normal(40)
    model = ols_fit(X, y)
    r = y - linreg_predict(model, X)
    A = np.hstack([X, np.ones((40, 1))])
    np.testing.assert_allclose(A.T @ r, 0, atol=1e-8)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_doubling_targets_doubles_solution(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((30, 3))
    y = rng.standard_normal(30)
    one, two = ols_fit(X, y, ridge_epsilon=0.0), ols_fit(X, 2 * y, ridge_epsilon=0.0)
    np.testing.assert_allclose(two.coefficients, 2 * one.coefficients, rtol=1e-12, atol=1e-12)
    assert two.intercept == pytest.approx(2 * one.intercept, rel=1e-12, abs=1e-12)


def test_too_few_rows():
    with pytest.raises(ValueError):
        ols_fit(np.zeros((3, 3)), np.zeros(3))


def test_degenerate_gram_rejected():
    X = np.ones((10, 2))  # both columns equal the intercept column
    with pytest.raises(DegenerateSystemError):
        ols_fit(X, np.arange(10.0), ridge_epsilon=0.0)


def test_negative_ridge_rejected():
    with pytest.raises(ValueError):
        ols_fit(np.eye(3), np.ones(3), ridge_epsilon=-1.0)


def test_predict_zero_model_and_permutation():
    X = np.random.default_rng(1).random((6, 2))
    assert linreg_predict(LinearModel(np.zeros(2), 3.0), X).tolist() == [3.0] * 6
    model = LinearModel(np.array([1.5, -2.0]), 0.25)
    perm = np.array([5, 0, 3, 1, 4, 2])
    np.testing.assert_array_equal(linreg_predict(model, X[perm]), linreg_predict(model, X)[perm])


def test_noiseless_fit_recovers_targets():
    X = np.random.default_rng(2).random((25, 3))
    y = X @ np.array([1.0, -3.0, 0.5]) + 7.0
    np.testing.assert_allclose(linreg_predict(ols_fit(X, y), X), y, atol=1e-6)


def test_predict_dimension_mismatch():
    with pytest.raises(ValueError):
        linreg_predict(LinearModel(np.zeros(2), 0.0), np.zeros((3, 3)))


def test_model_dict_round_trip():
    model = LinearModel(np.array([0.1, 1e-17, -3.3]), 2.5)
    back = LinearModel.from_dict(model.to_dict())
    np.testing.assert_array_equal(back.coefficients, model.coefficients)
    assert back.intercept == model.intercept


def test_non_finite_model_rejected():
    with pytest.raises(ValueError):
        LinearModel(np.array([np.nan]), 0.0)
