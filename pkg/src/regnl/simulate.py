"""Synthetic radiance/GDP/centroid/deflator tables with a known link.

GDP is ``f(nightlight, lat, lon) = 5e4 * nightlight * g(lat, lon)`` times
multiplicative noise, where ``g`` is a smooth positive function of location.
GDP therefore cannot be recovered from nightlight alone, but it can from all
three inputs. A disruption scales one period's nightlight by ``severity``;
because ``f`` is linear in nightlight, GDP drops by the same factor.
"""
from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .ingest import (CENTROID_HEADER, DEFAULT_BASE_YEAR, DEFLATOR_HEADER, GDP_HEADER,
                     QUARTERS, RADIANCE_HEADER, RegionQuarterRecord, period_mean)

GDP_PER_RADIANCE = 5.0e4
LAT_RANGE = (25.0, 49.0)
LON_RANGE = (-124.0, -67.0)
DEFLATOR_GROWTH = 0.02


@dataclass(frozen=True)
class SimulationSpec:
    n_regions: int = 50
    n_periods: int = 28
    start_year: int = 2014
    frequency: str = "quarterly"
    noise: float = 0.01
    disruption_period: int | None = None  # 0-based index into the simulated periods
    severity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_regions < 1 or self.n_periods < 1:
            raise ValueError("region and period counts must be >= 1")
        if self.frequency not in ("quarterly", "annual"):
            raise ValueError(f"unknown frequency {self.frequency!r}")
        if not 0.0 < self.severity <= 1.0:
            raise ValueError(f"severity must lie in (0, 1], got {self.severity}")
        if not self.noise >= 0.0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.disruption_period is not None and not 0 <= self.disruption_period < self.n_periods:
            raise ValueError(f"disruption period {self.disruption_period} outside "
                             f"0..{self.n_periods - 1}")

    def period_label(self, t: int) -> tuple[int, str]:
        if self.frequency == "annual":
            return self.start_year + t, "A"
        return self.start_year + t // 4, QUARTERS[t % 4]

    def period_index(self, label: str) -> int:
        """Index of a label such as ``2020Q2`` (or ``2020`` for annual data)."""
        m = re.fullmatch(r"(\d{4})(?:[-\s]?(Q[1-4]))?", label.strip())
        if not m:
            raise ValueError(f"cannot parse period label {label!r}")
        year = int(m.group(1))
        if self.frequency == "annual":
            t = year - self.start_year
        else:
            if m.group(2) is None:
                raise ValueError(f"quarterly label needs a quarter: {label!r}")
            t = 4 * (year - self.start_year) + QUARTERS.index(m.group(2))
        if not 0 <= t < self.n_periods:
            raise ValueError(f"period {label!r} outside the simulated range")
        return t

    @property
    def years(self) -> list[int]:
        return sorted({self.period_label(t)[0] for t in range(self.n_periods)})


def location_factor(lat, lon):
    """Smooth, strictly positive spatial multiplier."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    return np.exp(0.6 * np.sin(lat * math.pi / 18.0) * np.cos(lon * math.pi / 30.0)
                  + 0.3 * np.cos(lon * math.pi / 45.0))


def gdp_function(nightlight, lat, lon):
    return GDP_PER_RADIANCE * np.asarray(nightlight, dtype=np.float64) * location_factor(lat, lon)


def deflator_index(year: int) -> float:
    return (1.0 + DEFLATOR_GROWTH) ** (year - DEFAULT_BASE_YEAR)


@dataclass
class SimulatedData:
    spec: SimulationSpec
    region_ids: list[str]
    latitudes: np.ndarray
    longitudes: np.ndarray
    monthly_radiance: np.ndarray   # regions x periods x months-per-period
    records: list[RegionQuarterRecord]  # ground truth in base-year prices

    def national_gdp(self) -> np.ndarray:
        """Sum of real GDP over regions, per period index."""
        n_p = self.spec.n_periods
        totals = np.zeros(n_p)
        for i, r in enumerate(self.records):
            totals[i % n_p] += r.gdp
        return totals


def simulate(spec: SimulationSpec) -> SimulatedData:
    rng = np.random.default_rng(spec.seed)
    R, T = spec.n_regions, spec.n_periods
    months = 3 if spec.frequency == "quarterly" else 12
    width = max(2, len(str(R)))
    region_ids = [f"R{i + 1:0{width}d}" for i in range(R)]
    lat = np.round(rng.uniform(*LAT_RANGE, size=R), 4)
    lon = np.round(rng.uniform(*LON_RANGE, size=R), 4)
    base = np.exp(rng.normal(1.0, 0.6, size=R))
    growth = rng.normal(0.006, 0.004, size=R)
    shocks = rng.normal(0.0, 0.01, size=(R, T))
    level = base[:, None] * np.exp(growth[:, None] * np.arange(T) + np.cumsum(shocks, axis=1))
    wiggle = rng.normal(0.0, 0.02, size=(R, T, months))
    noise = rng.normal(0.0, spec.noise, size=(R, T)) if spec.noise > 0 else np.zeros((R, T))

    monthly = level[:, :, None] * (1.0 + wiggle)
    if spec.disruption_period is not None:
        monthly[:, spec.disruption_period, :] *= spec.severity

    records = []
    for i, region in enumerate(region_ids):
        g = float(location_factor(lat[i], lon[i]))
        for t in range(T):
            year, period = spec.period_label(t)
            nl = period_mean(monthly[i, t].tolist())
            gdp = GDP_PER_RADIANCE * nl * g
            if spec.noise > 0:
                gdp *= 1.0 + float(noise[i, t])
            records.append(RegionQuarterRecord(region, year, period, float(lat[i]),
                                               float(lon[i]), nl, gdp))
    return SimulatedData(spec, region_ids, lat, lon, monthly, records)


def write_simulation(data: SimulatedData, out_dir: str | Path) -> dict[str, Path]:
    """Write the four input tables (GDP in current prices) plus a manifest."""
    spec = data.spec
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in ("radiance", "gdp", "centroids", "deflators")}
    months = data.monthly_radiance.shape[2]

    with paths["radiance"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RADIANCE_HEADER)
        for i, region in enumerate(data.region_ids):
            for t in range(spec.n_periods):
                year, period = spec.period_label(t)
                first = 1 if period == "A" else 3 * QUARTERS.index(period) + 1
                for k in range(months):
                    w.writerow([region, year, first + k, repr(float(data.monthly_radiance[i, t, k]))])

    with paths["gdp"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GDP_HEADER)
        for r in data.records:
            w.writerow([r.region_id, r.year, r.period, repr(r.gdp * deflator_index(r.year)), r.year])

    with paths["centroids"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CENTROID_HEADER)
        for region, la, lo in zip(data.region_ids, data.latitudes, data.longitudes):
            w.writerow([region, repr(float(la)), repr(float(lo))])

    with paths["deflators"].open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DEFLATOR_HEADER)
        for year in range(min(DEFAULT_BASE_YEAR, spec.start_year), max(spec.years) + 1):
            w.writerow([year, repr(deflator_index(year))])

    manifest = out / "simulation.json"
    manifest.write_text(json.dumps(asdict(spec), indent=2) + "\n", encoding="utf-8")
    paths["manifest"] = manifest
    return paths
