"""Supervised matrices from joined records: year splits, feature selection,
and train-only scaling (min-max inputs, z-scored target)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Collection, Iterable, Sequence

import numpy as np

from .ingest import RegionQuarterRecord

ALL_FEATURES = ("mean_nightlight", "latitude", "longitude")


@dataclass(frozen=True)
class FeatureSpec:
    use_coordinates: bool = True
    use_nightlight: bool = True

    def __post_init__(self):
        if not self.use_nightlight:
            raise ValueError("nightlight is always a model input")

    @classmethod
    def from_name(cls, name: str) -> "FeatureSpec":
        if name == "full":
            return cls(use_coordinates=True)
        if name == "nightlight":
            return cls(use_coordinates=False)
        raise ValueError(f"unknown feature set {name!r}; expected 'nightlight' or 'full'")

    @property
    def name(self) -> str:
        return "full" if self.use_coordinates else "nightlight"

    @property
    def feature_names(self) -> tuple[str, ...]:
        return ALL_FEATURES if self.use_coordinates else ALL_FEATURES[:1]

    @property
    def dim(self) -> int:
        return len(self.feature_names)


@dataclass(frozen=True)
class SupervisedDataset:
    """Rows keyed by (region, year, period); columns named by ``feature_names``."""

    keys: tuple[tuple[str, int, str], ...]
    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] = ALL_FEATURES
    frequency: str = "quarterly"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64).reshape(len(self.keys), len(self.feature_names))
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} targets")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains missing or non-finite values")
        object.__setattr__(self, "keys", tuple(self.keys))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self) -> int:
        return len(self.keys)

    def columns(self, names: Sequence[str]) -> np.ndarray:
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise ValueError(f"dataset lacks feature(s) {missing}; has {list(self.feature_names)}")
        idx = [self.feature_names.index(n) for n in names]
        return self.X[:, idx]

    def select(self, spec: FeatureSpec) -> "SupervisedDataset":
        return SupervisedDataset(self.keys, self.columns(spec.feature_names), self.y,
                                 spec.feature_names, self.frequency)

    def subset(self, mask_or_index) -> "SupervisedDataset":
        idx = np.arange(len(self))[mask_or_index]
        return SupervisedDataset(tuple(self.keys[i] for i in idx), self.X[idx], self.y[idx],
                                 self.feature_names, self.frequency)

    @property
    def periods(self) -> list[tuple[int, str]]:
        """Distinct (year, period) pairs in chronological order."""
        return sorted({(k[1], k[2]) for k in self.keys})


def records_to_dataset(records: Iterable[RegionQuarterRecord]) -> SupervisedDataset:
    recs = sorted(records, key=lambda r: r.key)
    frequency = "annual" if recs and recs[0].period == "A" else "quarterly"
    X = np.array([[r.mean_nightlight, r.latitude, r.longitude] for r in recs],
                 dtype=np.float64).reshape(len(recs), 3)
    y = np.array([r.gdp for r in recs], dtype=np.float64)
    return SupervisedDataset(tuple(r.key for r in recs), X, y, ALL_FEATURES, frequency)


def split_by_years(records: Iterable[RegionQuarterRecord], train_years: Collection[int],
                   test_years: Collection[int], exclude: Collection[tuple] = (),
                   ) -> tuple[SupervisedDataset, SupervisedDataset]:
    """Partition records by year. Keys listed in ``exclude`` are left out of
    the training split only (they are still evaluated)."""
    train_years, test_years = set(train_years), set(test_years)
    overlap = train_years & test_years
    if overlap:
        raise ValueError(f"train and test years overlap: {sorted(overlap)}")
    excluded = {tuple(k) for k in exclude}
    recs = list(records)
    train = [r for r in recs if r.year in train_years and r.key not in excluded]
    test = [r for r in recs if r.year in test_years]
    if not train:
        raise ValueError(f"no records fall in train years {sorted(train_years)}")
    return records_to_dataset(train), records_to_dataset(test)


def holdout_split(dataset: SupervisedDataset, fraction: float, seed: int,
                  ) -> tuple[SupervisedDataset, SupervisedDataset]:
    """Randomly move ``fraction`` of the rows into a validation split."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"holdout fraction must lie in [0, 1), got {fraction}")
    n_hold = int(round(fraction * len(dataset)))
    order = np.random.default_rng(seed).permutation(len(dataset))
    hold = np.zeros(len(dataset), dtype=bool)
    hold[order[:n_hold]] = True
    return dataset.subset(~hold), dataset.subset(hold)


@dataclass(frozen=True)
class ScalerParams:
    feature_names: tuple[str, ...]
    x_min: tuple[float, ...]
    x_max: tuple[float, ...]
    y_mean: float
    y_std: float
    fitted_on: str = "train"

    def __post_init__(self):
        if not len(self.feature_names) == len(self.x_min) == len(self.x_max):
            raise ValueError("scaler vectors disagree in length")
        for name, lo, hi in zip(self.feature_names, self.x_min, self.x_max):
            if not hi > lo:
                raise ValueError(f"feature {name!r} has max {hi} <= min {lo}")
        if not self.y_std > 0:
            raise ValueError(f"target std must be positive, got {self.y_std}")

    @property
    def dim(self) -> int:
        return len(self.feature_names)

    def to_dict(self) -> dict:
        return {"feature_names": list(self.feature_names), "x_min": list(self.x_min),
                "x_max": list(self.x_max), "y_mean": self.y_mean, "y_std": self.y_std,
                "fitted_on": self.fitted_on}

    @classmethod
    def from_dict(cls, d: dict) -> "ScalerParams":
        return cls(tuple(d["feature_names"]), tuple(float(v) for v in d["x_min"]),
                   tuple(float(v) for v in d["x_max"]), float(d["y_mean"]),
                   float(d["y_std"]), str(d.get("fitted_on", "train")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ScalerParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_scaler(train: SupervisedDataset, spec: FeatureSpec, fitted_on: str = "train") -> ScalerParams:
    if len(train) == 0:
        raise ValueError("cannot fit a scaler on an empty split")
    if len(train) < 2:
        raise ValueError("target std is undefined for a single row")
    X = train.columns(spec.feature_names)
    lo, hi = X.min(axis=0), X.max(axis=0)
    for name, a, b in zip(spec.feature_names, lo, hi):
        if not b > a:
            raise ValueError(f"feature {name!r} is constant on the training rows")
    std = float(np.std(train.y))  # population convention (ddof=0)
    if not std > 0:
        raise ValueError("target is constant on the training rows")
    return ScalerParams(spec.feature_names, tuple(lo.tolist()), tuple(hi.tolist()),
                        float(np.mean(train.y)), std, fitted_on)


def scale_inputs(X: np.ndarray, scaler: ScalerParams) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != scaler.dim:
        raise ValueError(f"expected {scaler.dim} feature columns, got shape {X.shape}")
    lo = np.array(scaler.x_min)
    return (X - lo) / (np.array(scaler.x_max) - lo)


def scale_target(y, scaler: ScalerParams) -> np.ndarray:
    return (np.asarray(y, dtype=np.float64) - scaler.y_mean) / scaler.y_std


def transform(dataset: SupervisedDataset, scaler: ScalerParams) -> SupervisedDataset:
    """Apply the scaler; columns are picked by name, so a full-feature dataset
    can be transformed with a nightlight-only scaler."""
    X = scale_inputs(dataset.columns(scaler.feature_names), scaler)
    return SupervisedDataset(dataset.keys, X, scale_target(dataset.y, scaler),
                             scaler.feature_names, dataset.frequency)


def inverse_transform_target(predictions, scaler: ScalerParams) -> np.ndarray:
    return np.asarray(predictions, dtype=np.float64) * scaler.y_std + scaler.y_mean
