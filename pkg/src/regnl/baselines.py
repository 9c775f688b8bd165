"""Ordinary least squares on the nowcasting features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

# Non-reproduced reference errors for model families this package does not fit.
STATIC_REFERENCE_ERRORS = {"SVR": 6.8221, "XGBoost": 5.1436}
LINEAR_REFERENCE_ERROR = 5.1546


class DegenerateSystemError(ValueError):
    pass


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray
    intercept: float

    def __post_init__(self):
        w = np.asarray(self.coefficients, dtype=np.float64).reshape(-1)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.intercept)):
            raise ValueError("linear model parameters must be finite")
        object.__setattr__(self, "coefficients", w)
        object.__setattr__(self, "intercept", float(self.intercept))

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "intercept": self.intercept}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        return cls(np.array(d["coefficients"], dtype=np.float64), float(d["intercept"]))


REFINEMENT_STEPS = 2


def ols_fit(X, y, ridge_epsilon: float = 1e-8) -> LinearModel:
    """Least squares for ``y ~ X w + b`` through the normal equations.

    With ``A = [X, 1]`` the Cholesky factor of ``A^T A + eps I`` is computed
    once. The first solve is the ridge solution; each refinement step then
    solves for the correction against the unregularized system,
    ``beta += (A^T A + eps I)^-1 (A^T y - A^T A beta)``. The ridge bias shrinks
    by a factor of about eps / lambda per step, so on well-conditioned data the
    result is the ordinary least-squares fit; the stabilizer only keeps the
    factorization defined when columns are nearly collinear.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"X {X.shape} and y ({y.size},) do not align")
    if ridge_epsilon < 0:
        raise ValueError("ridge_epsilon must be >= 0")
    n, k = X.shape
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} rows for {k} features, got {n}")
    A = np.hstack([X, np.ones((n, 1))])
    gram = A.T @ A + ridge_epsilon * np.eye(k + 1)
    rhs = A.T @ y
    try:
        # Cholesky succeeds exactly when the stabilized Gram matrix is positive definite.
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        raise DegenerateSystemError("Gram matrix is singular even with the ridge term") from None
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1.0 / np.finfo(np.float64).eps:
        raise DegenerateSystemError(f"Gram matrix is numerically singular (cond {cond:.3g})")
    def solve(v: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve((L, True), v)

    beta = solve(rhs)
    plain = A.T @ A
    for _ in range(REFINEMENT_STEPS if ridge_epsilon > 0 else 0):
        beta = beta + solve(rhs - plain @ beta)
    return LinearModel(beta[:k], float(beta[k]))


def linreg_predict(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.coefficients.size:
        raise ValueError(f"expected {model.coefficients.size} feature columns, got shape {X.shape}")
    return X @ model.coefficients + model.intercept
