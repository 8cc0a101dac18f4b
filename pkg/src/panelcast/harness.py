"""Experiment runner: the model-by-lag evaluation grid with report emission.

Every cell of the grid builds the lag matrices, normalizes with train-only
parameters, trains one model with timed phases, predicts the held-out final
year, and scores it. Cells are independent: a failure is recorded in its
cell and never aborts the sweep, and each cell draws its random stream from
(master seed, model, lag) so parallel execution cannot change results.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import boost, ensemble, neural, svr, tree
from .lagfeat import LagConfig, SupervisedMatrix, apply_normalization, build_supervised, fit_normalization
from .metrics import MetricsReport, compute_metrics, time_phase, with_timings
from .panel import PanelTable, load_panel
from .synthetic import SyntheticConfig, generate_synthetic

REPORT_VERSION = "panelcast grid-report v1"

MODEL_ORDER = ("svmreg", "bdtree", "lsboost", "nn", "lstm", "ermbag", "ermbag_plus")

DEFAULT_HYPERPARAMS = {
    "svmreg": {"cost": 1.0, "epsilon": 0.1, "epochs": 2000, "step0": 0.1},
    "bdtree": {"max_depth": 8, "min_leaf": 3, "min_split_improvement": 0.0},
    "lsboost": {"n_stages": 100, "learning_rate": 0.1, "max_depth": 4, "min_leaf": 3},
    "nn": {"hidden": (10, 10), "epochs": 500, "rate": 0.05, "dropout": 0.0},
    "lstm": {"hidden": 10, "epochs": 500, "rate": 0.05, "dropout": 0.005},
    "ermbag": {"n_learners": 100, "block_size": None, "max_depth": 8, "min_leaf": 3},
    "ermbag_plus": {"n_learners": 100, "block_size": None, "max_depth": 8, "min_leaf": 3,
                    "patience": 2, "tolerance": 1e-4, "rmse_floor": 1e-8},
}

DEFAULT_SYNTHETIC = {"seed": 0, "n_states": 51, "start_year": 2011, "end_year": 2021}

_SYNTHETIC_GENERATOR_KEYS = (
    "target_base", "target_lag_coeff", "noise_scale", "noise_ar",
    "feature_trend_scale", "feature_noise_scale",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved description of one grid run.

    Exactly one of ``data`` (panel CSV path) or ``synthetic`` (generator
    parameters) supplies the panel. ``hyperparams`` holds per-model
    overrides merged over DEFAULT_HYPERPARAMS.
    """

    models: tuple = MODEL_ORDER
    lags: tuple = tuple(range(1, 10))
    seed: int = 0
    data: str | None = None
    synthetic: dict = field(default_factory=lambda: dict(DEFAULT_SYNTHETIC))
    hyperparams: dict = field(default_factory=dict)
    schema_strict: bool = False
    jobs: int = 1
    figures: bool = True
    output_dir: str | None = None

    def __post_init__(self):
        if not self.models:
            raise ConfigError("at least one model required")
        unknown = [m for m in self.models if m not in MODEL_ORDER]
        if unknown:
            raise ConfigError(f"unknown models {unknown}; choose from {MODEL_ORDER}")
        if not self.lags or any(not 1 <= lag <= 9 for lag in self.lags):
            raise ConfigError("lags must be a non-empty subset of 1..9")
        if self.data is not None and self.synthetic:
            raise ConfigError("give either a data path or a synthetic spec, not both")
        for model, overrides in self.hyperparams.items():
            if model not in MODEL_ORDER:
                raise ConfigError(f"hyperparams for unknown model {model!r}")
            bad = set(overrides) - set(DEFAULT_HYPERPARAMS[model])
            if bad:
                raise ConfigError(f"unknown hyperparameters for {model}: {sorted(bad)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def model_hyperparams(self, model: str) -> dict:
        merged = dict(DEFAULT_HYPERPARAMS[model])
        merged.update(self.hyperparams.get(model, {}))
        return merged

    def resolved(self) -> dict:
        """Fully materialized, JSON-ready form with all defaults filled in."""
        return {
            "models": list(self.models),
            "lags": sorted(self.lags),
            "seed": self.seed,
            "data": self.data,
            "synthetic": dict(sorted(self.synthetic.items())) if self.synthetic else None,
            "schema_strict": self.schema_strict,
            "hyperparams": {m: _jsonable(self.model_hyperparams(m)) for m in self.models},
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _jsonable(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(d.items())}


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from a parsed JSON document (inverse of resolved())."""
    known = {"models", "lags", "seed", "data", "synthetic", "hyperparams",
             "schema_strict", "jobs", "figures", "output_dir"}
    bad = set(raw) - known
    if bad:
        raise ConfigError(f"unknown config keys: {sorted(bad)}")
    kwargs = dict(raw)
    if "models" in kwargs:
        kwargs["models"] = tuple(kwargs["models"])
    if "lags" in kwargs:
        kwargs["lags"] = tuple(kwargs["lags"])
    if kwargs.get("synthetic") is None:
        kwargs["synthetic"] = {}
    if "hyperparams" in kwargs and kwargs["hyperparams"]:
        kwargs["hyperparams"] = {
            m: {k: (tuple(v) if isinstance(v, list) else v) for k, v in hv.items()}
            for m, hv in kwargs["hyperparams"].items()
        }
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class CellResult:
    model: str
    lag: int
    metrics: MetricsReport | None
    error: str | None = None


@dataclass(frozen=True)
class GridReport:
    cells: tuple
    resolved_config: dict
    config_hash: str
    seed: int
    version: str = REPORT_VERSION

    def model_order(self, model: str) -> int:
        return MODEL_ORDER.index(model)

    def cell(self, model: str, lag: int) -> CellResult:
        for c in self.cells:
            if c.model == model and c.lag == lag:
                return c
        raise KeyError(f"no cell for ({model}, {lag})")


def cell_seed(master_seed: int, model: str, lag: int) -> int:
    ss = np.random.SeedSequence([master_seed, MODEL_ORDER.index(model), lag])
    return int(ss.generate_state(1)[0])


def resolve_panel(cfg: ExperimentConfig) -> PanelTable:
    if cfg.data is not None:
        return load_panel(cfg.data, schema_strict=cfg.schema_strict)
    spec = dict(DEFAULT_SYNTHETIC)
    spec.update(cfg.synthetic)
    gen_kwargs = {k: spec[k] for k in _SYNTHETIC_GENERATOR_KEYS if k in spec}
    return generate_synthetic(
        seed=spec["seed"],
        n_states=spec["n_states"],
        years=range(spec["start_year"], spec["end_year"] + 1),
        config=SyntheticConfig(**gen_kwargs),
    )


# ---------------------------------------------------------------------------
# Model adapters: fit(train_matrix, hp, seed, lag) / predict(fitted, matrix)
# ---------------------------------------------------------------------------

def _tree_hp(hp: dict) -> tree.TreeHyperparams:
    return tree.TreeHyperparams(
        max_depth=hp["max_depth"], min_leaf=hp["min_leaf"],
        min_split_improvement=hp.get("min_split_improvement", 0.0),
    )


def _bagging_cfg(hp: dict, seed: int, lag: int) -> ensemble.BaggingConfig:
    early = ensemble.EarlyStopRule(
        patience=hp.get("patience", 2), tolerance=hp.get("tolerance", 1e-4))
    return ensemble.BaggingConfig(
        n_learners=hp["n_learners"], block_size=hp["block_size"], lag=lag,
        rmse_floor=hp.get("rmse_floor", 1e-8), early_stop=early, seed=seed,
    )


def _fit_svmreg(train, hp, seed, lag):
    return svr.fit_svr(train.X, train.y, cost=hp["cost"], epsilon=hp["epsilon"],
                       epochs=hp["epochs"], seed=seed, step0=hp["step0"])


def _fit_bdtree(train, hp, seed, lag):
    return tree.fit_tree(train.X, train.y, _tree_hp(hp))


def _fit_lsboost(train, hp, seed, lag):
    stage_hp = tree.TreeHyperparams(max_depth=hp["max_depth"], min_leaf=hp["min_leaf"])
    return boost.fit_lsboost(train.X, train.y, n_stages=hp["n_stages"],
                             learning_rate=hp["learning_rate"], hp=stage_hp)


def _fit_nn(train, hp, seed, lag):
    sizes = (train.d,) + tuple(hp["hidden"]) + (1,)
    model = neural.make_mlp(sizes, seed=seed)
    return neural.train_gd(model, train, epochs=hp["epochs"], rate=hp["rate"],
                           dropout=hp["dropout"], seed=seed)


def _fit_lstm(train, hp, seed, lag):
    sequences = neural.sequence_inputs(train)
    params = neural.make_lstm(sequences.shape[2], hp["hidden"], seed=seed)
    return neural.train_gd(params, (sequences, train.y), epochs=hp["epochs"],
                           rate=hp["rate"], dropout=hp["dropout"], seed=seed)


def _fit_ermbag(train, hp, seed, lag):
    return ensemble.fit_ermbag(train, _bagging_cfg(hp, seed, lag), _tree_hp(hp))


def _fit_ermbag_plus(train, hp, seed, lag):
    return ensemble.fit_ermbag_plus(train, _bagging_cfg(hp, seed, lag), _tree_hp(hp))


_FITTERS = {
    "svmreg": _fit_svmreg,
    "bdtree": _fit_bdtree,
    "lsboost": _fit_lsboost,
    "nn": _fit_nn,
    "lstm": _fit_lstm,
    "ermbag": _fit_ermbag,
    "ermbag_plus": _fit_ermbag_plus,
}

_PREDICTORS = {
    "svmreg": lambda model, m: svr.predict_svr(model, m.X),
    "bdtree": lambda model, m: tree.predict_tree(model, m.X),
    "lsboost": lambda model, m: boost.predict_lsboost(model, m.X),
    "nn": lambda model, m: neural.predict_mlp(model, m.X),
    "lstm": lambda model, m: neural.predict_lstm(model, neural.sequence_inputs(m)),
    "ermbag": lambda model, m: ensemble.predict_ensemble(model, m.X),
    "ermbag_plus": lambda model, m: ensemble.predict_ensemble(model, m.X),
}


def fit_cell_model(model: str, train: SupervisedMatrix, hp: dict, seed: int, lag: int):
    return _FITTERS[model](train, hp, seed, lag)


def predict_cell_model(model: str, fitted, matrix: SupervisedMatrix) -> np.ndarray:
    return _PREDICTORS[model](fitted, matrix)


def run_cell(panel: PanelTable, model: str, lag: int, hp: dict, seed: int) -> CellResult:
    """One grid cell; any exception is captured into the cell's error field."""
    try:
        lag_cfg = LagConfig(lag, train_year_max=panel.years[-2], test_year=panel.years[-1])
        train = build_supervised(panel, lag_cfg, "train")
        test = build_supervised(panel, lag_cfg, "test")
        norm = fit_normalization(train)
        train_n = apply_normalization(train, norm)
        test_n = apply_normalization(test, norm)
        fitted, train_seconds = time_phase(fit_cell_model, model, train_n, hp, seed, lag)
        yhat, predict_seconds = time_phase(predict_cell_model, model, fitted, test_n)
        report = with_timings(compute_metrics(test.y, yhat), train_seconds, predict_seconds)
        return CellResult(model=model, lag=lag, metrics=report)
    except Exception as exc:  # noqa: BLE001 - cell isolation is the contract
        return CellResult(model=model, lag=lag, metrics=None,
                          error=f"{type(exc).__name__}: {exc}")


def _run_cell_task(args):
    return run_cell(*args)


def run_grid(cfg: ExperimentConfig) -> GridReport:
    """Evaluate every (model, lag) cell and assemble the grid report."""
    panel = resolve_panel(cfg)
    tasks = [
        (panel, model, lag, cfg.model_hyperparams(model), cell_seed(cfg.seed, model, lag))
        for model in sorted(cfg.models, key=MODEL_ORDER.index)
        for lag in sorted(cfg.lags)
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            cells = list(pool.map(_run_cell_task, tasks))
    else:
        cells = [run_cell(*task) for task in tasks]
    return GridReport(cells=tuple(cells), resolved_config=cfg.resolved(),
                      config_hash=cfg.config_hash(), seed=cfg.seed)


def select_best(report: GridReport, model: str):
    """(lag, metrics) of the model's minimum-RMSE cell; ties take the smaller lag."""
    candidates = [
        (c.lag, c.metrics) for c in report.cells
        if c.model == model and c.metrics is not None and not math.isnan(c.metrics.rmse)
    ]
    if not candidates:
        raise KeyError(f"no scored cells for model {model!r}")
    return min(candidates, key=lambda pair: (pair[1].rmse, pair[0]))


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

_TIMING_FIELDS = ("train_seconds", "predict_seconds", "total_seconds")


def _float_or_none(v: float):
    return None if (v is None or math.isnan(v)) else float(v)


def report_to_dict(report: GridReport) -> dict:
    cells = []
    for c in report.cells:
        entry = {"model": c.model, "lag": c.lag, "error": c.error}
        if c.metrics is None:
            entry.update({k: None for k in ("n", "mae", "rmse", "mape", "r2")})
            entry.update({k: None for k in _TIMING_FIELDS})
            entry["flags"] = []
        else:
            m = c.metrics
            entry.update({"n": m.n, "mae": _float_or_none(m.mae), "rmse": _float_or_none(m.rmse),
                          "mape": _float_or_none(m.mape), "r2": _float_or_none(m.r2),
                          "flags": list(m.flags)})
            entry.update({k: getattr(m, k) for k in _TIMING_FIELDS})
        cells.append(entry)
    best = {}
    for model in sorted({c.model for c in report.cells}, key=MODEL_ORDER.index):
        try:
            lag, metrics = select_best(report, model)
            best[model] = {"lag": lag, "rmse": _float_or_none(metrics.rmse)}
        except KeyError:
            best[model] = None
    return {
        "version": report.version,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "resolved_config": report.resolved_config,
        "cells": cells,
        "best": best,
    }


def report_from_dict(doc: dict) -> GridReport:
    if doc.get("version") != REPORT_VERSION:
        raise ValueError(f"unrecognized report version {doc.get('version')!r}")
    cells = []
    for entry in doc["cells"]:
        if entry.get("mae") is None and entry.get("error"):
            metrics = None
        else:
            metrics = MetricsReport(
                mae=_nan_if_none(entry["mae"]), rmse=_nan_if_none(entry["rmse"]),
                mape=_nan_if_none(entry["mape"]), r2=_nan_if_none(entry["r2"]),
                n=entry["n"], train_seconds=entry["train_seconds"],
                predict_seconds=entry["predict_seconds"], total_seconds=entry["total_seconds"],
                flags=tuple(entry.get("flags", ())),
            )
        cells.append(CellResult(model=entry["model"], lag=entry["lag"],
                                metrics=metrics, error=entry.get("error")))
    return GridReport(cells=tuple(cells), resolved_config=doc["resolved_config"],
                      config_hash=doc["config_hash"], seed=doc["seed"])


def _nan_if_none(v):
    return math.nan if v is None else float(v)


def load_grid_report(path) -> GridReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _format_cell_value(v: float | None) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.3f}"


def summary_table(report: GridReport) -> str:
    """Aligned per-model best-lag summary with metric and timing columns."""
    header = ["Model", "Lag", "MAE", "RMSE", "MAPE", "R2",
              "Training", "Prediction", "Total"]
    rows = [header]
    for model in sorted({c.model for c in report.cells}, key=MODEL_ORDER.index):
        try:
            lag, m = select_best(report, model)
        except KeyError:
            rows.append([model, "-", "-", "-", "-", "-", "-", "-", "-"])
            continue
        rows.append([
            model, str(lag),
            _format_cell_value(m.mae), _format_cell_value(m.rmse),
            _format_cell_value(m.mape), _format_cell_value(m.r2),
            f"{m.train_seconds:.3f}", f"{m.predict_seconds:.3f}", f"{m.total_seconds:.3f}",
        ])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def emit_reports(report: GridReport, directory, figures: bool | None = None) -> list:
    """Write the structured report, summary table, delimited outputs, and
    (unless disabled) the metric-curve figures. Returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if figures is None:
        figures = bool(report.resolved_config.get("figures", True)) if isinstance(
            report.resolved_config, dict) else True

    written = []
    doc = report_to_dict(report)

    path = directory / "resolved_config.json"
    path.write_text(json.dumps(doc["resolved_config"], indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    written.append(path)

    path = directory / "grid_report.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)

    path = directory / "summary_table.txt"
    path.write_text(summary_table(report), encoding="utf-8")
    written.append(path)

    path = directory / "cells.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "lag", "n", "mae", "rmse", "mape", "r2",
                         "train_seconds", "predict_seconds", "total_seconds", "error"])
        for entry in doc["cells"]:
            writer.writerow([
                entry["model"], entry["lag"], entry["n"],
                *(_repr_or_blank(entry[k]) for k in ("mae", "rmse", "mape", "r2")),
                *(_repr_or_blank(entry[k]) for k in _TIMING_FIELDS),
                entry["error"] or "",
            ])
    written.append(path)

    path = directory / "metrics_long.csv"
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "lag", "metric", "value"])
        for entry in doc["cells"]:
            for metric in ("mae", "rmse", "mape", "r2"):
                writer.writerow([entry["model"], entry["lag"], metric,
                                 _repr_or_blank(entry[metric])])
    written.append(path)

    if figures:
        from .figures import save_metric_figures

        written.extend(save_metric_figures(report, directory))
    return written


def _repr_or_blank(v) -> str:
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)
