"""Per-region ARIMA(p, d, q) baseline.

Estimation minimizes the conditional sum of squares (zero pre-sample
residuals) with a Nelder-Mead simplex. Stationarity and invertibility are
enforced by a penalty added to the objective. Orders are picked by AICc
over a small grid.

The model for the d-times differenced series ``w`` is::

    w_t = c + sum_i phi_i w_{t-i} + sum_j theta_j eps_{t-j} + eps_t

An intercept is estimated only when d = 0. A differenced model then has no
drift, so a (0, 1, 0) fit forecasts the last observation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import kernels

MAX_ORDER = 2
MAX_ITER = 2000
# Order selection skips fits with a root this close to the unit circle: such
# boundary optima are CSS artifacts (near-cancelling or non-invertible terms).
MIN_ROOT_MODULUS = 1.01
UNIT_ROOT_ALPHA = 0.05
SIMPLEX_DIAMETER_TOL = 1e-8
INITIAL_STEP = 0.1


class ArimaError(ValueError):
    pass


class SeriesTooShortError(ArimaError):
    pass


class FitFailedError(ArimaError):
    pass


@dataclass(frozen=True, order=True)
class ArimaOrder:
    p: int
    d: int
    q: int

    def __post_init__(self):
        for name in ("p", "d", "q"):
            v = getattr(self, name)
            if not 0 <= v <= MAX_ORDER:
                raise ValueError(f"{name} = {v} outside 0..{MAX_ORDER}")
        if self.p + self.q == 0 and self.d == 0:
            raise ValueError("ARIMA(0, 0, 0) is a constant, not a model")

    @property
    def has_intercept(self) -> bool:
        return self.d == 0

    @property
    def n_params(self) -> int:
        """Estimated parameters including the innovation variance."""
        return self.p + self.q + int(self.has_intercept) + 1

    def min_length(self) -> int:
        return self.d + self.p + self.q + 2

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.p, self.d, self.q)


def default_grid(max_order: int = MAX_ORDER) -> list[ArimaOrder]:
    grid = []
    for d in range(max_order + 1):
        for p in range(max_order + 1):
            for q in range(max_order + 1):
                if p + q > 0 or d > 0:
                    grid.append(ArimaOrder(p, d, q))
    return grid


@dataclass(frozen=True)
class ArimaFit:
    order: ArimaOrder
    ar_coeffs: tuple[float, ...]
    ma_coeffs: tuple[float, ...]
    intercept: float
    sigma2: float
    css: float
    aicc: float
    n_effective: int
    iterations: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {"order": list(self.order.as_tuple()), "ar": list(self.ar_coeffs),
                "ma": list(self.ma_coeffs), "intercept": self.intercept,
                "sigma2": self.sigma2, "css": self.css, "aicc": self.aicc,
                "n_effective": self.n_effective, "iterations": self.iterations,
                "converged": self.converged}


@dataclass(frozen=True)
class GdpSeries:
    region_id: str
    keys: tuple[tuple[int, str], ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size != len(self.keys):
            raise ValueError("one value per period key is required")
        for (y0, p0), (y1, p1) in zip(self.keys, self.keys[1:]):
            if period_ordinal(y1, p1) - period_ordinal(y0, p0) != 1:
                raise ValueError(f"{self.region_id}: gap between {y0}{p0} and {y1}{p1}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "keys", tuple(self.keys))


def period_ordinal(year: int, period: str) -> int:
    if period == "A":
        return year
    return 4 * year + int(period[1]) - 1


def series_by_region(records: Iterable) -> dict[str, GdpSeries]:
    """Group records with ``region_id/year/period/gdp`` into contiguous series."""
    grouped: dict[str, list] = {}
    for r in records:
        grouped.setdefault(r.region_id, []).append(r)
    out = {}
    for region in sorted(grouped):
        rows = sorted(grouped[region], key=lambda r: period_ordinal(r.year, r.period))
        out[region] = GdpSeries(region, tuple((r.year, r.period) for r in rows),
                                np.array([r.gdp for r in rows]))
    return out


def next_periods(last: tuple[int, str], h: int) -> list[tuple[int, str]]:
    year, period = last
    out = []
    for _ in range(h):
        if period == "A":
            year += 1
        elif period == "Q4":
            year, period = year + 1, "Q1"
        else:
            period = f"Q{int(period[1]) + 1}"
        out.append((year, period))
    return out


# --- differencing -------------------------------------------------------------

def difference(values, d: int) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64)
    if d < 0:
        raise ValueError("d must be >= 0")
    if x.size <= d:
        raise SeriesTooShortError(f"series of length {x.size} cannot be differenced {d} times")
    return np.diff(x, n=d) if d else x.copy()


def integrate(diffs, tail) -> np.ndarray:
    """Undo ``d = len(tail)`` differences; ``tail`` holds the d levels that
    immediately precede the first entry of ``diffs``."""
    diffs = np.asarray(diffs, dtype=np.float64)
    tail = np.asarray(tail, dtype=np.float64).reshape(-1)
    if tail.size == 0:
        return diffs.copy()
    lower = integrate(diffs, np.diff(tail))  # first differences of the levels
    levels = np.empty(diffs.size)
    last = float(tail[-1])
    for i, v in enumerate(lower):
        last = last + float(v)
        levels[i] = last
    return levels


def _integrate_checked(diffs, tail, d: int) -> np.ndarray:
    if len(tail) != d:
        raise ValueError(f"tail length {len(tail)} does not match d = {d}")
    return integrate(diffs, tail)


# --- estimation ---------------------------------------------------------------

def css_objective(phi: Sequence[float], theta: Sequence[float], c: float, w) -> float:
    """Sum of squared one-step residuals over the indices with full AR history."""
    eps = kernels.css_residuals(np.asarray(w, dtype=np.float64), np.asarray(phi, dtype=np.float64),
                                np.asarray(theta, dtype=np.float64), float(c))
    return math.fsum(float(e) ** 2 for e in eps[len(phi):])


def is_admissible(phi: Sequence[float], theta: Sequence[float]) -> bool:
    """AR stationary and MA invertible (with the penalty's safety margin)."""
    return (kernels.stability_violation(list(phi)) == 0.0
            and kernels.stability_violation([-t for t in theta]) == 0.0)


def min_root_modulus(coeffs: Sequence[float]) -> float:
    """Smallest |B| solving ``1 - a_1 B - ... - a_k B^k = 0`` (inf if none)."""
    a = [float(v) for v in coeffs]
    while a and a[-1] == 0.0:
        a.pop()
    if not a:
        return math.inf
    roots = np.roots([-v for v in reversed(a)] + [1.0])
    return float(np.min(np.abs(roots)))


def aicc(css: float, n_eff: int, k: int) -> tuple[float, float]:
    """(sigma2, AICc) from the Gaussian likelihood at the CSS estimate."""
    sigma2 = max(css / n_eff, np.finfo(np.float64).tiny)
    loglik = -0.5 * n_eff * (math.log(2.0 * math.pi * sigma2) + 1.0)
    denom = n_eff - k - 1
    correction = 2.0 * k * (k + 1) / denom if denom > 0 else math.inf
    return sigma2, -2.0 * loglik + 2.0 * k + correction


def _series_scale(w: np.ndarray) -> float:
    s = float(np.std(w))
    if s > 0 and math.isfinite(s):
        return s
    m = float(np.max(np.abs(w)))
    return m if m > 0 else 1.0


def _nelder_mead(fun, x0: np.ndarray) -> tuple[np.ndarray, float, int, bool]:
    dim = x0.size
    simplex = np.vstack([x0] + [x0 + INITIAL_STEP * np.eye(dim)[i] for i in range(dim)])
    # Stop once every vertex is within tol/2 of the best one (in max-norm),
    # which bounds the simplex diameter by tol.
    res = minimize(fun, x0, method="Nelder-Mead",
                   options={"initial_simplex": simplex, "maxiter": MAX_ITER,
                            "xatol": SIMPLEX_DIAMETER_TOL / 2, "fatol": math.inf})
    return np.asarray(res.x), float(res.fun), int(res.nit), bool(res.success)


def fit(series, order: ArimaOrder | tuple[int, int, int]) -> ArimaFit:
    """CSS fit of one order.

    The differenced series is divided by its standard deviation before
    optimizing, so the penalty and simplex step sizes are scale-free; the
    intercept, residual sum of squares and variance are mapped back after.
    """
    if not isinstance(order, ArimaOrder):
        order = ArimaOrder(*order)
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    p, d, q = order.as_tuple()
    if x.size < order.min_length():
        raise SeriesTooShortError(
            f"order {order.as_tuple()} needs at least {order.min_length()} points, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ArimaError("series contains non-finite values")
    if x.size - d < 10 * (p + q + 1):
        warnings.warn(f"only {x.size - d} differenced points for order {order.as_tuple()}; "
                      "estimates may be unreliable", RuntimeWarning, stacklevel=2)
    w = difference(x, d)
    scale = _series_scale(w)
    ws = w / scale
    n_free = p + q + int(order.has_intercept)
    if n_free == 0:
        phi, theta, c = np.zeros(0), np.zeros(0), 0.0
        iterations, converged = 0, True
    else:
        c0 = float(np.mean(ws)) if order.has_intercept else 0.0

        def objective(v: np.ndarray) -> float:
            packed = np.empty(p + q + 1)
            packed[:p + q] = v[:p + q]
            packed[p + q] = v[p + q] if order.has_intercept else 0.0
            return kernels.css_penalized(packed, ws, p, q)

        x0 = np.zeros(n_free)
        if order.has_intercept:
            x0[-1] = c0
        best, f_best, iterations, converged = _nelder_mead(objective, x0)
        # One restart from the best vertex guards against a collapsed simplex.
        again, f_again, it2, conv2 = _nelder_mead(objective, best)
        iterations += it2
        if f_again < f_best:
            best, f_best, converged = again, f_again, conv2
        if not math.isfinite(f_best):
            raise FitFailedError(f"order {order.as_tuple()}: objective diverged at every start")
        phi, theta = best[:p].copy(), best[p:p + q].copy()
        c = float(best[p + q]) * scale if order.has_intercept else 0.0
        if not is_admissible(phi, theta):
            raise FitFailedError(f"order {order.as_tuple()}: no stationary, invertible optimum")
    css = css_objective(phi, theta, c, w)
    n_eff = w.size - p
    sigma2, crit = aicc(css, n_eff, order.n_params)
    return ArimaFit(order, tuple(float(v) for v in phi), tuple(float(v) for v in theta),
                    float(c), sigma2, css, crit, n_eff, iterations, converged)


def _residuals(fit_result: ArimaFit, x: np.ndarray) -> np.ndarray:
    w = difference(x, fit_result.order.d)
    return kernels.css_residuals(w, np.array(fit_result.ar_coeffs),
                                 np.array(fit_result.ma_coeffs), fit_result.intercept)


def unit_root_differences(x, max_d: int = MAX_ORDER, alpha: float = UNIT_ROOT_ALPHA) -> int | None:
    """Smallest d whose d-th difference rejects a unit root (augmented
    Dickey-Fuller with a constant, lag length by AIC); None if the test
    cannot run on a series this short."""
    from statsmodels.tsa.stattools import adfuller

    x = np.asarray(x, dtype=np.float64)
    for d in range(max_d):
        w = difference(x, d)
        if np.ptp(w) == 0.0:
            return d
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pvalue = adfuller(w, regression="c", autolag="AIC")[1]
        except (ValueError, np.linalg.LinAlgError):
            return None
        if pvalue < alpha:
            return d
    return max_d


def select_order(series, grid: Sequence[ArimaOrder] | None = None,
                 d_test: str | None = "adf") -> tuple[ArimaOrder, ArimaFit]:
    """Fit the admissible grid orders and keep the lowest AICc.

    With ``d_test="adf"`` the differencing order is fixed first by sequential
    unit-root tests and only grid orders with that d compete; AICc alone
    cannot tell a random walk from a persistent stationary AR fit.
    ``d_test=None`` searches all d by AICc.

    Candidates are scored on a shared window of residuals (original-series
    indices from ``max(d + p)`` on); scoring each fit on its own window would
    reward large p and d simply for conditioning away more observations.
    Fits with an AR or MA root inside modulus ``MIN_ROOT_MODULUS`` are skipped.
    Ties go to the smaller p + q, then the smaller d.
    """
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    grid = default_grid() if grid is None else [o if isinstance(o, ArimaOrder) else ArimaOrder(*o)
                                                for o in grid]
    if d_test == "adf":
        d = unit_root_differences(x, max(o.d for o in grid))
        if d is not None and any(o.d == d for o in grid):
            grid = [o for o in grid if o.d == d]
    elif d_test is not None:
        raise ValueError(f"unknown d_test {d_test!r}; expected 'adf' or None")
    fits = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for order in grid:
            if x.size < order.min_length():
                continue
            try:
                f = fit(x, order)
            except ArimaError:
                continue
            if (min_root_modulus(f.ar_coeffs) >= MIN_ROOT_MODULUS
                    and min_root_modulus([-t for t in f.ma_coeffs]) >= MIN_ROOT_MODULUS):
                fits.append(f)
    if not fits:
        raise FitFailedError(f"no admissible ARIMA order for a series of length {x.size}")
    start = max(f.order.d + f.order.p for f in fits)
    n_common = x.size - start
    scored = []
    for f in fits:
        eps = _residuals(f, x)[start - f.order.d:]
        css = math.fsum(float(e) ** 2 for e in eps)
        _, crit = aicc(css, n_common, f.order.n_params)
        o = f.order
        scored.append(((crit, o.p + o.q, o.d, o.as_tuple()), f))
    best = min(scored, key=lambda item: item[0])[1]
    return best.order, best


def forecast(fit_result: ArimaFit, series, h: int) -> np.ndarray:
    """Recursive h-step level forecasts with future innovations set to zero."""
    if h < 1:
        raise ValueError("horizon must be >= 1")
    x = np.asarray(getattr(series, "values", series), dtype=np.float64)
    p, d, q = fit_result.order.as_tuple()
    phi, theta, c = fit_result.ar_coeffs, fit_result.ma_coeffs, fit_result.intercept
    w = list(difference(x, d))
    eps = list(kernels.css_residuals(np.array(w), np.array(phi), np.array(theta), c))
    n = len(w)
    for t in range(n, n + h):
        value = c
        for i in range(p):
            value += phi[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= p:
                value += theta[j] * eps[t - 1 - j]
        w.append(value)
        eps.append(0.0)
    diffs = np.array(w[n:])
    return _integrate_checked(diffs, x[x.size - d:] if d else x[:0], d)


def fit_summary(region: str, fit_result: ArimaFit, forecasts) -> dict:
    return {
        "region": region,
        "order": list(fit_result.order.as_tuple()),
        "coefficients": {"ar": list(fit_result.ar_coeffs), "ma": list(fit_result.ma_coeffs),
                         "intercept": fit_result.intercept},
        "sigma2": fit_result.sigma2,
        "aicc": fit_result.aicc,
        "forecasts": [float(v) for v in forecasts],
    }
