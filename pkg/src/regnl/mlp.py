"""Deep ReLU regressor trained by full-batch gradient descent.

The network is ``n_hidden`` affine+ReLU stages (inverted dropout at train
time) followed by one linear output unit. The loss is mean squared error plus
``weight_decay * |W|^2 / 2`` over weight matrices only. The epoch loop runs in
:mod:`regnl.kernels`; the numpy forward/backward here are the readable
reference used for prediction, gradient checks and tests.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .dataset import ScalerParams

FORMAT_VERSION = 1
N_HIDDEN = 8
DEFAULT_WIDTH = 16
DEFAULT_EPOCHS = 200_000
# Step size for the scaled problem (inputs in [0, 1], z-scored target).
DEFAULT_LEARNING_RATE = 3e-2
REFERENCE_EPOCHS = 5_000_000
REFERENCE_LEARNING_RATE = 1e-6


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged: non-finite loss at epoch {epoch}")
        self.epoch = epoch


class ModelFileError(ValueError):
    """Raised for unreadable, truncated or incompatible model files."""


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int = 3
    hidden_widths: tuple[int, ...] = (DEFAULT_WIDTH,) * N_HIDDEN
    dropout_rate: float = 0.1
    weight_decay: float = 1e-4
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be positive, got {self.input_dim}")
        if not self.hidden_widths:
            raise ValueError("at least one hidden layer is required")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError(f"hidden widths must be positive, got {self.hidden_widths}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not self.weight_decay >= 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not self.learning_rate > 0.0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")

    @classmethod
    def reference(cls, input_dim: int = 3, seed: int = 0) -> "MlpConfig":
        """Long-run setting: 5e6 epochs at step size 1e-6."""
        return cls(input_dim=input_dim, learning_rate=REFERENCE_LEARNING_RATE,
                   epochs=REFERENCE_EPOCHS, seed=seed)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_widths, 1]

    @property
    def trace_every(self) -> int:
        return max(1, self.epochs // 1000)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MlpConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown mlp config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MlpParams:
    """``weights[l]`` has shape (out, in); the last entry is the output layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must be non-empty lists of equal length")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {l}: W {W.shape} and b {b.shape} are inconsistent")
            if l and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: input width {W.shape[1]} != previous output "
                                 f"{self.weights[l - 1].shape[0]}")
        if self.weights[-1].shape[0] != 1:
            raise ValueError("output layer must have width 1")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    def copy(self) -> "MlpParams":
        return MlpParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (*self.weights, *self.biases))

    def equals(self, other: "MlpParams") -> bool:
        return (len(self.weights) == len(other.weights)
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass
class ForwardCache:
    """Per-layer inputs and the multipliers (ReLU derivative x dropout scale)."""

    activations: list[np.ndarray]
    multipliers: list[np.ndarray]
    pre_activations: list[np.ndarray]


@dataclass
class TrainingTrace:
    epochs: np.ndarray
    losses: np.ndarray
    final_loss: float
    wall_time: float
    backend: str = kernels.BACKEND

    def __post_init__(self):
        if np.any(np.diff(self.epochs) <= 0):
            raise ValueError("trace epochs must be strictly increasing")


def init_params(config: MlpConfig) -> MlpParams:
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def dropout_masks(params: MlpParams, n_rows: int, dropout_rate: float, seed: int,
                  epoch: int) -> list[np.ndarray]:
    """The inverted-dropout multipliers the trainer uses at ``epoch``."""
    thr = kernels.dropout_threshold(dropout_rate)
    return [kernels.dropout_scales(seed, epoch, l, n_rows, W.shape[0], thr)
            for l, W in enumerate(params.weights[:-1])]


def _check_inputs(X: np.ndarray, params: MlpParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ValueError(f"expected {params.input_dim} input columns, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs must be finite")
    return X


def _affine(a: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ W.T + b`` with a reduction order that does not depend on the row's
    position in the batch (BLAS blocking does), so each prediction is a pure
    function of its own input row."""
    return np.multiply(a[:, None, :], W[None, :, :]).sum(axis=2) + b


def forward_batch(X: np.ndarray, params: MlpParams,
                  masks: Sequence[np.ndarray] | None = None) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass over rows of ``X``. ``masks`` holds per-hidden-layer dropout
    multipliers (train mode); ``None`` means eval mode."""
    X = _check_inputs(X, params)
    a = X
    cache = ForwardCache([X], [], [])
    for l in range(params.n_hidden):
        z = _affine(a, params.weights[l], params.biases[l])
        m = (z > 0.0).astype(np.float64)
        if masks is not None:
            m = m * masks[l]
        a = z * m
        cache.pre_activations.append(z)
        cache.multipliers.append(m)
        cache.activations.append(a)
    out = _affine(a, params.weights[-1], params.biases[-1])
    return out[:, 0], cache


def forward(x, params: MlpParams, mode: str = "eval", dropout_rate: float = 0.0,
            seed: int = 0, epoch: int = 0) -> tuple[float, ForwardCache]:
    """Single-row forward pass. In train mode the dropout masks come from the
    seeded stream ``(seed, epoch, layer)``."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    if mode == "eval":
        masks = None
    elif mode == "train":
        masks = dropout_masks(params, 1, dropout_rate, seed, epoch)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out, cache = forward_batch(x, params, masks)
    return float(out[0]), cache


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size == 0:
        raise ValueError("mse of an empty batch is undefined")
    r = p - t
    return float(r @ r) / r.size


def objective(X, y, params: MlpParams, weight_decay: float,
              masks: Sequence[np.ndarray] | None = None) -> float:
    """MSE plus the weight-decay term, with fixed dropout multipliers."""
    pred, _ = forward_batch(X, params, masks)
    decay = 0.5 * weight_decay * sum(float(np.sum(W * W)) for W in params.weights)
    return mse_loss(pred, y) + decay


def backward(X, y, params: MlpParams, cache: ForwardCache, predictions: np.ndarray,
             weight_decay: float) -> MlpParams:
    """Gradient of :func:`objective` at the cached forward pass."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if predictions.shape != y.shape or len(cache.activations) != params.n_hidden + 1:
        raise ValueError("cache, predictions and targets do not match")
    n = y.size
    g = (2.0 / n) * (predictions - y)[:, None]
    grads_w: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    for l in range(params.n_hidden, -1, -1):
        W = params.weights[l]
        grads_w[l] = g.T @ cache.activations[l] + weight_decay * W
        grads_b[l] = g.sum(axis=0)
        if l > 0:
            g = (g @ W) * cache.multipliers[l - 1]
    return MlpParams(grads_w, grads_b)


def _as_arrays(train_set, y=None):
    if y is None:
        return np.asarray(train_set.X, dtype=np.float64), np.asarray(train_set.y, dtype=np.float64)
    return np.asarray(train_set, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train(train_set, config: MlpConfig, y=None, init: MlpParams | None = None,
          ) -> tuple[MlpParams, TrainingTrace]:
    """Run ``config.epochs`` full-batch steps on a scaled dataset.

    ``train_set`` is a :class:`~regnl.dataset.SupervisedDataset` or, with
    ``y`` given, a bare feature matrix.
    """
    X, y = _as_arrays(train_set, y)
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ValueError(f"config expects {config.input_dim} inputs, data has shape {X.shape}")
    if X.shape[0] == 0 or X.shape[0] != y.shape[0]:
        raise ValueError("training data must be non-empty with one target per row")
    params = init.copy() if init is not None else init_params(config)
    start = time.perf_counter()
    if config.epochs == 0:
        return params, TrainingTrace(np.zeros(0, dtype=np.int64), np.zeros(0),
                                     mse_loss(predict_batch(X, params), y), 0.0)
    weights = [np.ascontiguousarray(W) for W in params.weights]
    biases = [np.ascontiguousarray(b) for b in params.biases]
    epochs, losses, diverged = kernels.train_full_batch(
        X, y, weights, biases, config.learning_rate, config.weight_decay,
        kernels.dropout_threshold(config.dropout_rate), config.seed, 0, config.epochs,
        config.trace_every)
    if diverged >= 0:
        raise TrainingDivergedError(int(diverged))
    params = MlpParams(weights, biases)
    if not params.is_finite():
        raise TrainingDivergedError(config.epochs - 1)
    final = mse_loss(predict_batch(X, params), y)
    return params, TrainingTrace(np.asarray(epochs), np.asarray(losses), final,
                                 time.perf_counter() - start)


def predict_batch(X, params: MlpParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2 and X.shape[0] == 0:
        if X.shape[1] != params.input_dim:
            raise ValueError(f"expected {params.input_dim} input columns, got shape {X.shape}")
        return np.zeros(0)
    out, _ = forward_batch(X, params)
    return out


def write_trace_csv(trace: TrainingTrace, path: str | Path) -> None:
    lines = ["epoch,mse"] + [f"{int(e)},{float(l)!r}" for e, l in zip(trace.epochs, trace.losses)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- persistence ---------------------------------------------------------------

def model_to_dict(params: MlpParams, scaler: ScalerParams | None, config: MlpConfig) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "scaler": scaler.to_dict() if scaler is not None else None,
        "layers": [{"W": W.tolist(), "b": b.tolist()}
                   for W, b in zip(params.weights, params.biases)],
    }


def save_model(params: MlpParams, scaler: ScalerParams | None, config: MlpConfig,
               path: str | Path) -> Path:
    """Write one JSON document. Python's float repr is the shortest exact
    round-trip form (at most 17 significant digits), so reloading is lossless."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(params, scaler, config), indent=1) + "\n",
                    encoding="utf-8")
    return path


def load_model(path: str | Path) -> tuple[MlpParams, ScalerParams | None, MlpConfig]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"{path}: corrupt model file ({exc})") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ModelFileError(f"{path}: not a model file")
    if doc["format_version"] != FORMAT_VERSION:
        raise ModelFileError(f"{path}: format_version {doc['format_version']} "
                             f"unsupported (expected {FORMAT_VERSION})")
    try:
        config = MlpConfig.from_dict(doc["config"])
        scaler = ScalerParams.from_dict(doc["scaler"]) if doc["scaler"] is not None else None
        params = MlpParams([np.array(layer["W"], dtype=np.float64) for layer in doc["layers"]],
                           [np.array(layer["b"], dtype=np.float64) for layer in doc["layers"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"{path}: malformed model file ({exc})") from None
    if params.input_dim != config.input_dim or params.n_hidden != len(config.hidden_widths):
        raise ModelFileError(f"{path}: layer shapes disagree with the stored config")
    return params, scaler, config
