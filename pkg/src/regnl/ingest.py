"""Parse radiance, GDP, deflator and centroid tables and join them into
region-period records.

All readers expect UTF-8 CSV with a fixed header and ``.`` as the decimal
separator. Output ordering is canonical: ``(region_id, year, period)``.
"""
from __future__ import annotations

import csv
import math
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

RADIANCE_MIN = -1.5
RADIANCE_MAX = 193565.0
DEFAULT_BASE_YEAR = 2011

RADIANCE_HEADER = ["region_id", "year", "month", "mean_radiance"]
GDP_HEADER = ["region_id", "year", "period", "nominal_gdp", "base_year"]
CENTROID_HEADER = ["region_id", "latitude", "longitude"]
DEFLATOR_HEADER = ["year", "deflator_index"]
DATASET_HEADER = ["region_id", "year", "period", "latitude", "longitude",
                  "mean_nightlight", "gdp"]

QUARTERS = ("Q1", "Q2", "Q3", "Q4")
ANNUAL = "A"
FREQUENCIES = ("quarterly", "annual")

PeriodKey = tuple[str, int, str]


class IngestError(ValueError):
    """Base class for input-table problems."""


class SchemaError(IngestError):
    pass


class ValidationError(IngestError):
    pass


class DuplicateKeyError(IngestError):
    pass


@dataclass(frozen=True)
class RadianceSample:
    region_id: str
    year: int
    month: int
    mean_radiance: float


@dataclass(frozen=True)
class GdpObservation:
    """One GDP figure. ``nominal_gdp`` is in prices of ``reported_base_year``
    (current-price series use the observation year itself)."""

    region_id: str
    year: int
    period: str
    nominal_gdp: float
    reported_base_year: int

    @property
    def is_annual(self) -> bool:
        return self.period == ANNUAL


@dataclass(frozen=True)
class RegionCentroid:
    region_id: str
    latitude: float
    longitude: float


@dataclass(frozen=True)
class DeflatorTable:
    indices: Mapping[int, float]
    base_year: int = DEFAULT_BASE_YEAR

    @classmethod
    def normalized(cls, raw: Mapping[int, float], base_year: int = DEFAULT_BASE_YEAR) -> "DeflatorTable":
        """Rescale ``raw`` so the index equals 1.0 in ``base_year``."""
        if base_year not in raw:
            raise ValidationError(f"deflator table lacks base year {base_year}")
        ref = raw[base_year]
        for year, value in raw.items():
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"deflator index for {year} must be positive, got {value}")
        return cls({int(y): (1.0 if y == base_year else v / ref) for y, v in raw.items()},
                   base_year)

    def __getitem__(self, year: int) -> float:
        try:
            return self.indices[year]
        except KeyError:
            raise ValidationError(f"no deflator for year {year}") from None


@dataclass(frozen=True)
class PeriodMean:
    mean_nightlight: float
    n_months: int
    expected_months: int

    @property
    def complete(self) -> bool:
        return self.n_months >= self.expected_months


@dataclass(frozen=True)
class RegionQuarterRecord:
    """One joined row; ``period`` is ``Q1``..``Q4`` or ``A`` for annual data."""

    region_id: str
    year: int
    period: str
    latitude: float
    longitude: float
    mean_nightlight: float
    gdp: float

    @property
    def key(self) -> PeriodKey:
        return (self.region_id, self.year, self.period)


@dataclass
class CoverageReport:
    matched: int = 0
    radiance_without_gdp: list[PeriodKey] = field(default_factory=list)
    gdp_without_radiance: list[PeriodKey] = field(default_factory=list)
    regions_without_centroid: list[str] = field(default_factory=list)
    dropped_for_centroid: int = 0
    unused_centroids: list[str] = field(default_factory=list)
    incomplete_periods: list[tuple[str, int, str, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = {
            "matched": self.matched,
            "radiance_without_gdp": len(self.radiance_without_gdp),
            "gdp_without_radiance": len(self.gdp_without_radiance),
            "dropped_for_centroid": self.dropped_for_centroid,
            "incomplete_periods": len(self.incomplete_periods),
        }
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CoverageReport":
        return cls(
            matched=d["matched"],
            radiance_without_gdp=[tuple(k) for k in d["radiance_without_gdp"]],
            gdp_without_radiance=[tuple(k) for k in d["gdp_without_radiance"]],
            regions_without_centroid=list(d["regions_without_centroid"]),
            dropped_for_centroid=d["dropped_for_centroid"],
            unused_centroids=list(d["unused_centroids"]),
            incomplete_periods=[tuple(k) for k in d["incomplete_periods"]],
        )

    def incomplete_keys(self) -> set[PeriodKey]:
        return {(r, y, p) for r, y, p, _ in self.incomplete_periods}


# --- CSV plumbing -----------------------------------------------------------

def _rows(path: str | Path, header: list[str]):
    """Yield ``(line_number, row)`` for the data rows of a CSV with ``header``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(header)}") from None
        if [h.strip() for h in found] != header:
            raise SchemaError(f"{path}:1: header {found!r} does not match {header!r}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [cell.strip() for cell in row]


def _real(text: str, what: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{where}: {what} {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ValidationError(f"{where}: {what} {text!r} is not finite")
    return value


def _int(text: str, what: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{where}: {what} {text!r} is not an integer") from None


def _region(text: str, where: str) -> str:
    if not text:
        raise ValidationError(f"{where}: empty region_id")
    return text


def parse_radiance_csv(path: str | Path) -> list[RadianceSample]:
    samples = []
    seen: set[tuple[str, int, int]] = set()
    for line, (region, year, month, radiance) in _rows(path, RADIANCE_HEADER):
        where = f"{path}:{line}"
        s = RadianceSample(_region(region, where), _int(year, "year", where),
                           _int(month, "month", where), _real(radiance, "mean_radiance", where))
        if not 1 <= s.month <= 12:
            raise ValidationError(f"{where}: month {s.month} outside 1-12")
        if not RADIANCE_MIN <= s.mean_radiance <= RADIANCE_MAX:
            raise ValidationError(
                f"{where}: mean_radiance {s.mean_radiance} outside [{RADIANCE_MIN}, {RADIANCE_MAX}]")
        key = (s.region_id, s.year, s.month)
        if key in seen:
            raise DuplicateKeyError(f"{where}: duplicate radiance sample {key}")
        seen.add(key)
        samples.append(s)
    return samples


def parse_gdp_csv(path: str | Path) -> list[GdpObservation]:
    observations = []
    kinds: dict[str, bool] = {}
    seen: set[PeriodKey] = set()
    for line, (region, year, period, gdp, base_year) in _rows(path, GDP_HEADER):
        where = f"{path}:{line}"
        if period not in QUARTERS and period != ANNUAL:
            raise ValidationError(f"{where}: period {period!r} not in Q1..Q4 or A")
        obs = GdpObservation(_region(region, where), _int(year, "year", where), period,
                             _real(gdp, "nominal_gdp", where),
                             _int(base_year, "base_year", where))
        if obs.nominal_gdp <= 0:
            raise ValidationError(f"{where}: nominal_gdp must be positive, got {obs.nominal_gdp}")
        annual = obs.is_annual
        if kinds.setdefault(obs.region_id, annual) != annual:
            raise SchemaError(f"{where}: region {obs.region_id!r} mixes quarterly and annual periods")
        key = (obs.region_id, obs.year, obs.period)
        if key in seen:
            raise DuplicateKeyError(f"{where}: duplicate GDP observation {key}")
        seen.add(key)
        observations.append(obs)
    return observations


def parse_centroids_csv(path: str | Path) -> list[RegionCentroid]:
    centroids = []
    seen: set[str] = set()
    for line, (region, lat, lon) in _rows(path, CENTROID_HEADER):
        where = f"{path}:{line}"
        c = RegionCentroid(_region(region, where), _real(lat, "latitude", where),
                           _real(lon, "longitude", where))
        if not -90.0 <= c.latitude <= 90.0:
            raise ValidationError(f"{where}: latitude {c.latitude} outside [-90, 90]")
        if not -180.0 <= c.longitude <= 180.0:
            raise ValidationError(f"{where}: longitude {c.longitude} outside [-180, 180]")
        if c.region_id in seen:
            raise DuplicateKeyError(f"{where}: duplicate centroid for {c.region_id!r}")
        seen.add(c.region_id)
        centroids.append(c)
    return centroids


def parse_deflator_csv(path: str | Path, base_year: int = DEFAULT_BASE_YEAR) -> DeflatorTable:
    raw: dict[int, float] = {}
    for line, (year, index) in _rows(path, DEFLATOR_HEADER):
        where = f"{path}:{line}"
        y = _int(year, "year", where)
        if y in raw:
            raise DuplicateKeyError(f"{where}: duplicate deflator year {y}")
        raw[y] = _real(index, "deflator_index", where)
    return DeflatorTable.normalized(raw, base_year)


# --- transformations ----------------------------------------------------------

def rebase_gdp(observations: Iterable[GdpObservation],
               deflators: DeflatorTable) -> list[GdpObservation]:
    """Express every observation in prices of the deflator table's base year.

    A value quoted in prices of year B is divided by the (normalized) index of
    B; current-price figures carry B = their own year. Observations already in
    the base year pass through unchanged, which makes the operation idempotent.
    """
    out = []
    for obs in observations:
        index = deflators[obs.reported_base_year]
        out.append(GdpObservation(obs.region_id, obs.year, obs.period,
                                  obs.nominal_gdp / index, deflators.base_year))
    return out


def period_of(month: int, frequency: str) -> str:
    if frequency == "quarterly":
        return QUARTERS[(month - 1) // 3]
    if frequency == "annual":
        return ANNUAL
    raise ValueError(f"unknown frequency {frequency!r}; expected one of {FREQUENCIES}")


def period_mean(values: Sequence[float]) -> float:
    # statistics.mean works in exact rationals and rounds once, so the result
    # does not depend on sample order and a constant period returns its value.
    return float(statistics.mean(values))


def aggregate_to_period(samples: Iterable[RadianceSample],
                        frequency: str = "quarterly") -> dict[PeriodKey, PeriodMean]:
    """Average monthly radiance per (region, year, period).

    Periods with no months are absent; periods with some months missing keep
    the mean of what is present and report ``complete == False``.
    """
    expected = 3 if frequency == "quarterly" else 12
    buckets: dict[PeriodKey, list[float]] = defaultdict(list)
    for s in samples:
        buckets[(s.region_id, s.year, period_of(s.month, frequency))].append(s.mean_radiance)
    return {key: PeriodMean(period_mean(vals), len(vals), expected)
            for key, vals in sorted(buckets.items())}


def join_records(radiance: Mapping[PeriodKey, PeriodMean],
                 gdp: Iterable[GdpObservation],
                 centroids: Iterable[RegionCentroid],
                 ) -> tuple[list[RegionQuarterRecord], CoverageReport]:
    """Inner-join aggregated radiance, GDP and centroids.

    Nothing is dropped silently: every unmatched key lands in the returned
    coverage report.
    """
    gdp_by_key = {(o.region_id, o.year, o.period): o for o in gdp}
    centroid_by_region = {c.region_id: c for c in centroids}
    report = CoverageReport()
    records = []
    missing_centroid: set[str] = set()
    used_regions: set[str] = set()
    for key in sorted(set(radiance) | set(gdp_by_key)):
        region, year, period = key
        if key not in gdp_by_key:
            report.radiance_without_gdp.append(key)
            continue
        if key not in radiance:
            report.gdp_without_radiance.append(key)
            continue
        centroid = centroid_by_region.get(region)
        if centroid is None:
            missing_centroid.add(region)
            report.dropped_for_centroid += 1
            continue
        agg = radiance[key]
        used_regions.add(region)
        if not agg.complete:
            report.incomplete_periods.append((region, year, period, agg.n_months))
        records.append(RegionQuarterRecord(region, year, period, centroid.latitude,
                                           centroid.longitude, agg.mean_nightlight,
                                           gdp_by_key[key].nominal_gdp))
    report.matched = len(records)
    report.regions_without_centroid = sorted(missing_centroid)
    report.unused_centroids = sorted(set(centroid_by_region) - used_regions)
    return records, report


def sort_records(records: Iterable[RegionQuarterRecord]) -> list[RegionQuarterRecord]:
    return sorted(records, key=lambda r: r.key)


def write_dataset_csv(records: Sequence[RegionQuarterRecord], path: str | Path) -> Path:
    """Write records in canonical order. ``repr`` of a float is the shortest
    string that parses back to the same value, so the file round-trips exactly."""
    if not records:
        raise ValueError("refusing to write an empty dataset")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DATASET_HEADER)
        for r in sort_records(records):
            writer.writerow([r.region_id, r.year, r.period, repr(r.latitude), repr(r.longitude),
                             repr(r.mean_nightlight), repr(r.gdp)])
    return path


def parse_dataset_csv(path: str | Path) -> list[RegionQuarterRecord]:
    records = []
    for line, (region, year, period, lat, lon, nl, gdp) in _rows(path, DATASET_HEADER):
        where = f"{path}:{line}"
        if period not in QUARTERS and period != ANNUAL:
            raise ValidationError(f"{where}: period {period!r} not in Q1..Q4 or A")
        rec = RegionQuarterRecord(_region(region, where), _int(year, "year", where), period,
                                  _real(lat, "latitude", where), _real(lon, "longitude", where),
                                  _real(nl, "mean_nightlight", where), _real(gdp, "gdp", where))
        if not RADIANCE_MIN <= rec.mean_nightlight <= RADIANCE_MAX:
            raise ValidationError(f"{where}: mean_nightlight {rec.mean_nightlight} out of range")
        records.append(rec)
    return records


def build_dataset(radiance_path, gdp_path, centroids_path, deflator_path,
                  frequency: str = "quarterly", base_year: int = DEFAULT_BASE_YEAR,
                  ) -> tuple[list[RegionQuarterRecord], CoverageReport]:
    """Run the whole ingest pipeline on four input files."""
    for p in (radiance_path, gdp_path, centroids_path, deflator_path):
        if not Path(p).is_file():
            raise FileNotFoundError(f"input file not found: {p}")
    samples = parse_radiance_csv(radiance_path)
    observations = parse_gdp_csv(gdp_path)
    centroids = parse_centroids_csv(centroids_path)
    deflators = parse_deflator_csv(deflator_path, base_year)
    aggregated = aggregate_to_period(samples, frequency)
    return join_records(aggregated, rebase_gdp(observations, deflators), centroids)
