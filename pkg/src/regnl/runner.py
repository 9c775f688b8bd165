"""Experiment orchestration: dataset building, training, evaluation,
model comparison and synthetic data, with every artifact written under one
output directory.

Layout of ``out``::

    dataset.csv, coverage.json
    models/      regnl_<features>.json (+ _scaler.json, _trace.csv),
                 linreg_<features>.json, arima.json
    predictions/ <model>_<features>.csv   (region,year,period,actual,predicted)
    reports/     evaluate_<model>_<features>.{txt,json}, compare.{txt,json}
    plots/       actual_vs_predicted_<year><period>.csv, nightlight_vs_gdp.csv
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import arima, baselines, ingest, mlp, simulate
from .dataset import (FeatureSpec, SupervisedDataset, fit_scaler, holdout_split,
                      inverse_transform_target, scale_inputs, split_by_years, transform)
from .metrics import EvaluationInput, weighted_error

MODELS = ("regnl", "arima", "linreg")

# Published figures for the real-data study; printed for orientation only and
# never recomputed here (the underlying data is not redistributable).
REFERENCE_LINES = {
    "evaluate": [
        "2019 feature ablation, average weighted error: nightlight-only 6.2156, full 0.7066",
        "2020 full-feature average weighted error: 0.6895",
    ],
    "compare": [
        "2020 Q1 / Q2 weighted error: ARIMA 0.1235 / 1.4976, ReGNL 0.7243 / 0.6879",
        "Linear Regression 5.1546, SVR 6.8221, XGBoost 5.1436 (SVR and XGBoost are not implemented)",
    ],
}
REFERENCE_LABEL = "[published reference, not recomputed]"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    radiance: str | None = None
    gdp: str | None = None
    centroids: str | None = None
    deflators: str | None = None
    dataset: str | None = None        # defaults to <out>/dataset.csv
    frequency: str = "quarterly"
    base_year: int = ingest.DEFAULT_BASE_YEAR
    features: str = "full"
    train_years: list[int] = field(default_factory=lambda: list(range(2014, 2019)))
    test_years: list[int] = field(default_factory=lambda: [2019, 2020])
    models: list[str] = field(default_factory=lambda: ["regnl", "arima", "linreg"])
    mlp: dict = field(default_factory=dict)
    exclude_incomplete: bool = True
    holdout_fraction: float = 0.0
    arima_d_test: str | None = "adf"
    simulation: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.frequency not in ingest.FREQUENCIES:
            raise ConfigError(f"frequency must be one of {ingest.FREQUENCIES}")
        FeatureSpec.from_name(self.features)
        self.train_years = sorted(int(y) for y in self.train_years)
        self.test_years = sorted(int(y) for y in self.test_years)
        if not self.train_years:
            raise ConfigError("train_years is empty")
        overlap = set(self.train_years) & set(self.test_years)
        if overlap:
            raise ConfigError(f"train and test years overlap: {sorted(overlap)}")
        bad = [m for m in self.models if m not in MODELS]
        if bad or not self.models:
            raise ConfigError(f"models must be a non-empty subset of {MODELS}, got {self.models}")
        unknown = set(self.mlp) - {f.name for f in fields(mlp.MlpConfig)} - set()
        if unknown or "input_dim" in self.mlp:
            raise ConfigError(f"unsupported mlp keys: {sorted(unknown | ({'input_dim'} & set(self.mlp)))}")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean)

    # --- derived paths and settings ---------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def dataset_path(self) -> Path:
        return Path(self.dataset) if self.dataset else self.out_dir / "dataset.csv"

    @property
    def coverage_path(self) -> Path:
        return self.dataset_path.with_name("coverage.json")

    @property
    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec.from_name(self.features)

    def mlp_config(self, input_dim: int) -> mlp.MlpConfig:
        kwargs = dict(self.mlp)
        kwargs["seed"] = self.seed
        return mlp.MlpConfig(input_dim=input_dim, **kwargs)

    def to_dict(self) -> dict:
        return asdict(self)


# --- shared helpers -----------------------------------------------------------

def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _write_json(path: Path, doc) -> Path:
    return _write_text(path, json.dumps(doc, indent=2) + "\n")


def _label(year: int, period: str) -> str:
    return f"{year}" if period == "A" else f"{year}{period}"


def load_records(cfg: ExperimentConfig) -> list[ingest.RegionQuarterRecord]:
    if not cfg.dataset_path.is_file():
        raise FileNotFoundError(f"dataset not found: {cfg.dataset_path} (run build-dataset first)")
    return ingest.parse_dataset_csv(cfg.dataset_path)


def incomplete_keys(cfg: ExperimentConfig) -> set:
    if not cfg.exclude_incomplete or not cfg.coverage_path.is_file():
        return set()
    doc = json.loads(cfg.coverage_path.read_text(encoding="utf-8"))
    return ingest.CoverageReport.from_dict(doc).incomplete_keys()


def splits(cfg: ExperimentConfig) -> tuple[SupervisedDataset, SupervisedDataset]:
    return split_by_years(load_records(cfg), cfg.train_years, cfg.test_years,
                          exclude=incomplete_keys(cfg))


def model_stem(model: str, features: str) -> str:
    return "arima" if model == "arima" else f"{model}_{features}"


# --- build-dataset --------------------------------------------------------------

def cmd_build_dataset(cfg: ExperimentConfig) -> dict:
    paths = {"radiance": cfg.radiance, "gdp": cfg.gdp, "centroids": cfg.centroids,
             "deflators": cfg.deflators}
    missing = [k for k, v in paths.items() if not v]
    if missing:
        raise ConfigError(f"config lacks input paths: {missing}")
    records, coverage = ingest.build_dataset(cfg.radiance, cfg.gdp, cfg.centroids,
                                             cfg.deflators, cfg.frequency, cfg.base_year)
    if not records:
        raise ingest.ValidationError("the join produced no records; see the coverage report")
    ingest.write_dataset_csv(records, cfg.dataset_path)
    _write_json(cfg.coverage_path, coverage.to_dict())
    plot = cfg.out_dir / "plots" / "nightlight_vs_gdp.csv"
    plot.parent.mkdir(parents=True, exist_ok=True)
    with plot.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "year", "period", "mean_nightlight", "gdp"])
        for r in ingest.sort_records(records):
            w.writerow([r.region_id, r.year, r.period, repr(r.mean_nightlight), repr(r.gdp)])
    return {"records": len(records), "dataset": str(cfg.dataset_path),
            "coverage": coverage.to_dict()["counts"]}


# --- train ------------------------------------------------------------------------

def train_regnl(cfg: ExperimentConfig) -> dict:
    spec = cfg.feature_spec
    train_set, _ = splits(cfg)
    if cfg.holdout_fraction > 0:
        train_set, _ = holdout_split(train_set, cfg.holdout_fraction, cfg.seed)
    years = f"{cfg.train_years[0]}-{cfg.train_years[-1]}"
    scaler = fit_scaler(train_set, spec, fitted_on=f"train years {years}")
    scaled = transform(train_set, scaler)
    config = cfg.mlp_config(spec.dim)
    params, trace = mlp.train(scaled, config)
    stem = cfg.out_dir / "models" / model_stem("regnl", spec.name)
    mlp.save_model(params, scaler, config, stem.with_suffix(".json"))
    scaler.save(stem.with_name(stem.name + "_scaler.json"))
    mlp.write_trace_csv(trace, stem.with_name(stem.name + "_trace.csv"))
    return {"model": str(stem.with_suffix(".json")), "train_rows": len(train_set),
            "final_mse": trace.final_loss, "wall_time_s": trace.wall_time,
            "backend": trace.backend}


def train_linreg(cfg: ExperimentConfig) -> dict:
    spec = cfg.feature_spec
    train_set, _ = splits(cfg)
    model = baselines.ols_fit(train_set.columns(spec.feature_names), train_set.y)
    path = cfg.out_dir / "models" / f"{model_stem('linreg', spec.name)}.json"
    _write_json(path, {"features": list(spec.feature_names), **model.to_dict()})
    return {"model": str(path), "train_rows": len(train_set)}


def train_arima(cfg: ExperimentConfig) -> dict:
    records = load_records(cfg)
    train_recs = [r for r in records if r.year in set(cfg.train_years)]
    test_keys = sorted({(r.year, r.period) for r in records if r.year in set(cfg.test_years)})
    summaries = []
    for region, series in arima.series_by_region(train_recs).items():
        order, fit = arima.select_order(series, d_test=cfg.arima_d_test)
        last = series.keys[-1]
        # forecast far enough ahead to reach the last test period
        h = max((arima.period_ordinal(*k) - arima.period_ordinal(*last) for k in test_keys),
                default=0)
        h = max(h, 0)
        preds = arima.forecast(fit, series, h) if h else np.zeros(0)
        summary = arima.fit_summary(region, fit, preds)
        summary["forecast_periods"] = [_label(*k) for k in arima.next_periods(last, h)]
        summary["method"] = {"estimation": "conditional sum of squares, Nelder-Mead",
                             "selection": "AICc" + (", d by ADF test" if cfg.arima_d_test else "")}
        summaries.append(summary)
    path = cfg.out_dir / "models" / "arima.json"
    _write_json(path, summaries)
    return {"model": str(path), "regions": len(summaries)}


TRAINERS: dict[str, Callable[[ExperimentConfig], dict]] = {
    "regnl": train_regnl, "linreg": train_linreg, "arima": train_arima}


def cmd_train(cfg: ExperimentConfig, models: Sequence[str] | None = None) -> dict:
    return {m: TRAINERS[m](cfg) for m in (models or cfg.models)}


# --- prediction and evaluation -------------------------------------------------------

def predictor(cfg: ExperimentConfig, model: str) -> Callable[[SupervisedDataset], np.ndarray]:
    """Load a trained model and return ``test_set -> GDP predictions``."""
    models = cfg.out_dir / "models"
    if model == "regnl":
        path = models / f"{model_stem('regnl', cfg.features)}.json"
        if not path.is_file():
            raise FileNotFoundError(f"model not found: {path} (run train first)")
        params, scaler, _ = mlp.load_model(path)

        def predict(ds: SupervisedDataset) -> np.ndarray:
            X = scale_inputs(ds.columns(scaler.feature_names), scaler)
            return inverse_transform_target(mlp.predict_batch(X, params), scaler)
        return predict
    if model == "linreg":
        path = models / f"{model_stem('linreg', cfg.features)}.json"
        if not path.is_file():
            raise FileNotFoundError(f"model not found: {path} (run train first)")
        doc = json.loads(path.read_text(encoding="utf-8"))
        lin = baselines.LinearModel.from_dict(doc)
        return lambda ds: baselines.linreg_predict(lin, ds.columns(doc["features"]))
    if model == "arima":
        path = models / "arima.json"
        if not path.is_file():
            raise FileNotFoundError(f"model not found: {path} (run train first)")
        table = {}
        for s in json.loads(path.read_text(encoding="utf-8")):
            for label, value in zip(s["forecast_periods"], s["forecasts"]):
                table[(s["region"], label)] = value

        def predict(ds: SupervisedDataset) -> np.ndarray:
            out = []
            for region, year, period in ds.keys:
                key = (region, _label(year, period))
                if key not in table:
                    raise ValueError(f"no ARIMA forecast for {region} {_label(year, period)}")
                out.append(table[key])
            return np.array(out, dtype=np.float64)
        return predict
    raise ConfigError(f"unknown model {model!r}")


def write_predictions(path: Path, ds: SupervisedDataset, predicted: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["region", "year", "period", "actual", "predicted"])
        for (region, year, period), a, p in zip(ds.keys, ds.y.tolist(), predicted.tolist()):
            w.writerow([region, year, period, repr(a), repr(p)])
    return path


def read_predictions(path: Path) -> dict[tuple[int, str], tuple[list[str], list[float], list[float]]]:
    """Group a prediction CSV by period: ``{(year, period): (regions, actual, predicted)}``."""
    grouped: dict = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            regions, actual, pred = grouped.setdefault((int(row["year"]), row["period"]), ([], [], []))
            regions.append(row["region"])
            actual.append(float(row["actual"]))
            pred.append(float(row["predicted"]))
    return dict(sorted(grouped.items()))


def period_errors(path: Path) -> dict[str, float]:
    """Weighted error per period, recomputed from a stored prediction file."""
    return {_label(*k): weighted_error(EvaluationInput(tuple(r), np.array(a), np.array(p))).total
            for k, (r, a, p) in read_predictions(path).items()}


def evaluate_model(cfg: ExperimentConfig, model: str,
                   predict: Callable[[SupervisedDataset], np.ndarray] | None = None) -> dict:
    _, test_set = splits(cfg)
    if len(test_set) == 0:
        raise ConfigError(f"no records in test years {cfg.test_years}")
    predict = predict or predictor(cfg, model)
    predicted = np.asarray(predict(test_set), dtype=np.float64)
    path = write_predictions(cfg.out_dir / "predictions" / f"{model_stem(model, cfg.features)}.csv",
                             test_set, predicted)
    errors = period_errors(path)
    return {"model": model, "features": "-" if model == "arima" else cfg.features,
            "predictions": path.relative_to(cfg.out_dir).as_posix(), "errors": errors,
            "average": math.fsum(errors.values()) / len(errors)}


def _table(rows: list[dict], kind: str) -> str:
    periods = sorted({p for r in rows for p in r["errors"]})
    head = f"{'model':<8} {'features':<11}" + "".join(f"{p:>10}" for p in periods) + f"{'average':>10}"
    lines = ["Weighted error per test period (10 x sum|actual - predicted| / sum actual)", head]
    for r in rows:
        cells = "".join(f"{r['errors'][p]:>10.4f}" if p in r["errors"] else f"{'-':>10}"
                        for p in periods)
        lines.append(f"{r['model']:<8} {r['features']:<11}{cells}{r['average']:>10.4f}")
    lines.append("")
    lines += [f"{REFERENCE_LABEL} {line}" for line in REFERENCE_LINES[kind]]
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg: ExperimentConfig, model: str = "regnl") -> dict:
    row = evaluate_model(cfg, model)
    stem = cfg.out_dir / "reports" / f"evaluate_{model_stem(model, cfg.features)}"
    text = _table([row], "evaluate")
    _write_text(stem.with_suffix(".txt"), text)
    _write_json(stem.with_suffix(".json"),
                {**row, "references": REFERENCE_LINES["evaluate"]})
    return {**row, "text": text}


def cmd_compare(cfg: ExperimentConfig, models: Sequence[str] | None = None) -> dict:
    """Evaluate each requested model (training any that are missing) and emit
    the comparison report and per-period plot tables."""
    models = [m for m in MODELS if m in (models or cfg.models)]
    rows = []
    for m in models:
        try:
            predictor(cfg, m)
        except FileNotFoundError:
            TRAINERS[m](cfg)
        rows.append(evaluate_model(cfg, m))

    preds = {r["model"]: read_predictions(cfg.out_dir / r["predictions"]) for r in rows}
    plot_files = []
    extra = [m for m in models if m not in ("regnl", "arima")]
    for key in next(iter(preds.values())):
        regions, actual, _ = preds[rows[0]["model"]][key]
        path = cfg.out_dir / "plots" / f"actual_vs_predicted_{_label(*key)}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        columns = {m: dict(zip(preds[m][key][0], preds[m][key][2])) for m in models if key in preds[m]}
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["region", "actual", "predicted_regnl", "predicted_arima"]
                       + [f"predicted_{m}" for m in extra])
            for region, a in zip(regions, actual):
                cells = [repr(columns[m][region]) if m in columns and region in columns[m] else ""
                         for m in ("regnl", "arima", *extra)]
                w.writerow([region, repr(a), *cells])
        plot_files.append(path.relative_to(cfg.out_dir).as_posix())

    text = _table(rows, "compare")
    report = {"rows": rows, "averages": {r["model"]: r["average"] for r in rows},
              "plots": plot_files, "references": REFERENCE_LINES["compare"],
              "static_reference_errors": {"Linear Regression": baselines.LINEAR_REFERENCE_ERROR,
                                          **baselines.STATIC_REFERENCE_ERRORS}}
    reports = cfg.out_dir / "reports"
    _write_text(reports / "compare.txt", text)
    _write_json(reports / "compare.json", report)
    return {**report, "text": text}


# --- simulate ------------------------------------------------------------------------

def simulation_spec(cfg: ExperimentConfig) -> simulate.SimulationSpec:
    opts = dict(cfg.simulation)
    unknown = set(opts) - {f.name for f in fields(simulate.SimulationSpec)}
    if unknown:
        raise ConfigError(f"unknown simulation keys: {sorted(unknown)}")
    opts["seed"] = cfg.seed
    opts.setdefault("frequency", cfg.frequency)
    label = opts.get("disruption_period")
    if isinstance(label, str):
        probe = simulate.SimulationSpec(**{**opts, "disruption_period": None})
        opts["disruption_period"] = probe.period_index(label)
    return simulate.SimulationSpec(**opts)


def cmd_simulate(cfg: ExperimentConfig) -> dict:
    spec = simulation_spec(cfg)
    paths = simulate.write_simulation(simulate.simulate(spec), cfg.out_dir / "data")
    return {name: str(p) for name, p in paths.items()}


def simulated_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Point a config's input paths at the files ``cmd_simulate`` writes."""
    data = cfg.out_dir / "data"
    return cfg.with_overrides(radiance=str(data / "radiance.csv"), gdp=str(data / "gdp.csv"),
                              centroids=str(data / "centroids.csv"),
                              deflators=str(data / "deflators.csv"))
