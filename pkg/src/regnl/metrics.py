"""GDP-share-weighted nowcast error and per-region diagnostics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CONSTANT_FACTOR = 10.0


@dataclass(frozen=True)
class EvaluationInput:
    """Actual and predicted GDP for the regions of one evaluation period.

    The national total is the sum of the actuals over exactly these regions.
    """

    regions: tuple[str, ...]
    gdp_actual: np.ndarray
    gdp_predicted: np.ndarray

    def __post_init__(self):
        actual = np.asarray(self.gdp_actual, dtype=np.float64).reshape(-1)
        predicted = np.asarray(self.gdp_predicted, dtype=np.float64).reshape(-1)
        if actual.size == 0:
            raise ValueError("evaluation needs at least one region")
        if actual.shape != predicted.shape or len(self.regions) != actual.size:
            raise ValueError(
                f"length mismatch: {len(self.regions)} regions, {actual.size} actuals, "
                f"{predicted.size} predictions")
        if not np.all(np.isfinite(actual)) or not np.all(np.isfinite(predicted)):
            raise ValueError("actual and predicted GDP must be finite")
        if np.any(actual <= 0):
            bad = self.regions[int(np.argmax(actual <= 0))]
            raise ValueError(f"actual GDP must be positive (region {bad!r})")
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "gdp_actual", actual)
        object.__setattr__(self, "gdp_predicted", predicted)

    @classmethod
    def from_arrays(cls, actual, predicted, regions: Sequence[str] | None = None):
        actual = np.asarray(actual, dtype=np.float64).reshape(-1)
        if regions is None:
            regions = tuple(f"r{i}" for i in range(actual.size))
        return cls(tuple(regions), actual, np.asarray(predicted, dtype=np.float64))

    @property
    def gdp_national(self) -> float:
        return math.fsum(self.gdp_actual)


@dataclass(frozen=True)
class RegionTerm:
    region: str
    actual: float
    predicted: float
    relative_error: float
    weight: float
    contribution: float


@dataclass(frozen=True)
class WeightedErrorReport:
    total: float
    terms: tuple[RegionTerm, ...]
    constant_factor: float = CONSTANT_FACTOR

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "constant_factor": self.constant_factor,
            "terms": [vars(t) for t in self.terms],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "actual", "predicted", "relative_error", "weight", "contribution"])
            for t in self.terms:
                w.writerow([t.region, repr(t.actual), repr(t.predicted), repr(t.relative_error),
                            repr(t.weight), repr(t.contribution)])


def weighted_error(data: EvaluationInput) -> WeightedErrorReport:
    """Sum over regions of relative error x GDP share x 10."""
    national = data.gdp_national
    terms = []
    for region, a, p in zip(data.regions, data.gdp_actual.tolist(), data.gdp_predicted.tolist()):
        rel = abs(a - p) / a
        weight = a / national
        terms.append(RegionTerm(region, a, p, rel, weight, rel * weight * CONSTANT_FACTOR))
    total = math.fsum(t.contribution for t in terms)
    return WeightedErrorReport(total, tuple(terms))


def weighted_error_closed_form(actual, predicted) -> float:
    """``10 * sum|a - p| / sum a``: the same quantity with the shares cancelled."""
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    return CONSTANT_FACTOR * math.fsum(np.abs(a - p)) / math.fsum(a)


def mape(data: EvaluationInput) -> float:
    """Unweighted mean absolute percentage error (as a fraction)."""
    rel = np.abs(data.gdp_actual - data.gdp_predicted) / data.gdp_actual
    return math.fsum(rel) / rel.size
