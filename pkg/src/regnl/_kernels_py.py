"""Pure-Python/numpy implementations of the hot kernels.

These are the reference semantics for ``regnl._kernels`` (the compiled
extension). Both backends draw identical dropout masks, so a training run
differs between them only by floating-point summation order.
"""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# Added to the CSS for each unit of distance outside the stationary /
# invertible region.
PENALTY_WEIGHT = 1.0e6
STABILITY_MARGIN = 1.0e-4

BACKEND = "python"


def _splitmix(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def _splitmix_array(x: np.ndarray) -> np.ndarray:
    z = x + np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, epoch: int, layer: int) -> int:
    k = _splitmix(seed & MASK64)
    k = _splitmix(k ^ (epoch & MASK64))
    return _splitmix(k ^ (layer & MASK64))


def dropout_threshold(rate: float) -> int:
    """16-bit drop threshold; a unit is dropped when its lane is below it."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    return int(round(rate * 65536))


def dropout_scales(seed: int, epoch: int, layer: int, n_rows: int, width: int,
                   threshold: int) -> np.ndarray:
    """Inverted-dropout multipliers (0 or 1/keep) for one hidden layer."""
    n = n_rows * width
    if threshold == 0:
        return np.ones((n_rows, width))
    n_words = (n + 3) // 4
    key = np.uint64(stream_key(seed, epoch, layer))
    with np.errstate(over="ignore"):
        words = _splitmix_array(key + np.arange(n_words, dtype=np.uint64))
    shifts = np.array([0, 16, 32, 48], dtype=np.uint64)
    lanes = ((words[:, None] >> shifts) & np.uint64(0xFFFF)).ravel()
    lanes = lanes[:n].reshape(n_rows, width)
    scale = 65536.0 / (65536 - threshold)
    return np.where(lanes >= threshold, scale, 0.0)


@np.errstate(over="ignore", invalid="ignore")  # divergence is reported, not warned
def train_full_batch(X, y, weights, biases, lr, weight_decay, threshold, seed,
                     epoch_start, n_epochs, trace_every):
    """Full-batch gradient descent on MSE + weight_decay*|W|^2/2, in place.

    Returns ``(trace_epochs, trace_losses, diverged_epoch)``; the last is -1
    when every epoch produced a finite loss.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    n_hidden = len(weights) - 1
    trace_epochs: list[int] = []
    trace_losses: list[float] = []
    for e in range(epoch_start, epoch_start + n_epochs):
        acts = [X]
        scales = []
        a = X
        for layer in range(n_hidden):
            z = a @ weights[layer].T + biases[layer]
            m = (z > 0.0).astype(np.float64)
            if threshold:
                m *= dropout_scales(seed, e, layer, n, z.shape[1], threshold)
            a = z * m
            acts.append(a)
            scales.append(m)
        out = a @ weights[n_hidden].T + biases[n_hidden]
        resid = out[:, 0] - y
        loss = float(resid @ resid) / n
        if not math.isfinite(loss):
            return np.array(trace_epochs, dtype=np.int64), np.array(trace_losses), e
        if (e - epoch_start) % trace_every == 0:
            trace_epochs.append(e)
            trace_losses.append(loss)
        g = (2.0 / n) * resid[:, None]
        for layer in range(n_hidden, -1, -1):
            W = weights[layer]
            gW = g.T @ acts[layer]
            gb = g.sum(axis=0)
            if layer > 0:
                g = (g @ W) * scales[layer - 1]
            W -= lr * (gW + weight_decay * W)
            biases[layer] -= lr * gb
    return np.array(trace_epochs, dtype=np.int64), np.array(trace_losses), -1


def css_residuals(w, phi, theta, c):
    """One-step residuals of an ARMA recursion with zero pre-sample terms.

    Entries before index ``len(phi)`` lack full AR history and are zero.
    """
    w = [float(v) for v in w]
    phi = [float(v) for v in phi]
    theta = [float(v) for v in theta]
    p, q = len(phi), len(theta)
    n = len(w)
    eps = [0.0] * n
    for t in range(p, n):
        e = w[t] - c
        for i in range(p):
            e -= phi[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= p:
                e -= theta[j] * eps[t - 1 - j]
        eps[t] = e
    return np.array(eps)


def stability_violation(coeffs) -> float:
    """Distance of ``1 - a1 B - a2 B^2`` from having all roots outside |B| = 1."""
    bound = 1.0 - STABILITY_MARGIN
    if len(coeffs) == 0:
        return 0.0
    if len(coeffs) == 1:
        return max(0.0, abs(coeffs[0]) - bound)
    a1, a2 = coeffs[0], coeffs[1]
    return (max(0.0, a1 + a2 - bound) + max(0.0, a2 - a1 - bound)
            + max(0.0, abs(a2) - bound))


def css_penalized(x, w, p, q):
    """CSS objective plus the stationarity/invertibility penalty.

    ``x`` packs ``[phi_1..phi_p, theta_1..theta_q, c]``.
    """
    phi = [float(v) for v in x[:p]]
    theta = [float(v) for v in x[p:p + q]]
    c = float(x[p + q])
    eps = css_residuals(w, phi, theta, c)
    css = 0.0
    for e in eps[p:]:
        css += float(e) * float(e)
    if not math.isfinite(css):
        return math.inf
    # MA polynomial is 1 + theta(B), i.e. coefficients -theta in the AR form.
    violation = stability_violation(phi) + stability_violation([-t for t in theta])
    return css + PENALTY_WEIGHT * violation
