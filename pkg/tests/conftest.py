from __future__ import annotations

import csv
from pathlib import Path

import pytest

from regnl import ingest


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def csv_file(tmp_path):
    """``csv_file(name, header, rows) -> path`` inside the test's tmp dir."""
    def make(name, header, rows):
        return write_csv(tmp_path / name, header, rows)
    return make


@pytest.fixture
def california_inputs(csv_file):
    """One fully matched quarter whose monthly radiance averages to 1.4385."""
    radiance = csv_file("radiance.csv", ingest.RADIANCE_HEADER,
                        [["California", 2014, 1, "1.4385"], ["California", 2014, 2, "1.4385"],
                         ["California", 2014, 3, "1.4385"]])
    gdp = csv_file("gdp.csv", ingest.GDP_HEADER,
                   [["California", 2014, "Q1", "2252602.814", 2011]])
    centroids = csv_file("centroids.csv", ingest.CENTROID_HEADER,
                         [["California", "37.2453", "-119.6081"]])
    deflators = csv_file("deflators.csv", ingest.DEFLATOR_HEADER,
                         [[2011, "1.0"], [2014, "1.05"]])
    return radiance, gdp, centroids, deflators
