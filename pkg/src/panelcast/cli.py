"""Command-line interface.

Verbs:
  synth   write a synthetic panel CSV
  fit     train and score one (model, lag) cell
  grid    run the full model-by-lag sweep and emit reports
  report  re-emit reports (table, CSVs, figures) from a saved run
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .panel import write_panel
from .synthetic import SyntheticConfig, generate_synthetic


def _parse_lags(text: str) -> tuple:
    """Accept '2', '1,3,5', or '1-9'."""
    lags = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            lags.extend(range(int(lo), int(hi) + 1))
        else:
            lags.append(int(part))
    return tuple(sorted(set(lags)))


def _parse_overrides(pairs) -> dict:
    """--set model.param=value items into {model: {param: value}}."""
    out: dict = {}
    for pair in pairs or ():
        try:
            key, raw = pair.split("=", 1)
            model, param = key.split(".", 1)
        except ValueError:
            raise SystemExit(f"bad --set {pair!r}; expected model.param=value") from None
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.setdefault(model, {})[param] = value
    return out


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="panel CSV path (default: synthetic panel)")
    parser.add_argument("--schema-strict", action="store_true",
                        help="require the full 90-feature, 51-state schema when loading")
    parser.add_argument("--synth-seed", type=int, default=0, help="synthetic panel seed")
    parser.add_argument("--states", type=int, default=51, help="synthetic state count")
    parser.add_argument("--start-year", type=int, default=2011)
    parser.add_argument("--end-year", type=int, default=2021)
    parser.add_argument("--noise-scale", type=float, default=None,
                        help="synthetic target noise scale")


def _synthetic_spec(args) -> dict:
    spec = {"seed": args.synth_seed, "n_states": args.states,
            "start_year": args.start_year, "end_year": args.end_year}
    if getattr(args, "noise_scale", None) is not None:
        spec["noise_scale"] = args.noise_scale
    return spec


def _config_from_args(args, models, lags) -> harness.ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        base = json.loads(Path(args.config).read_text(encoding="utf-8"))
    base["models"] = list(models)
    base["lags"] = list(lags)
    base["seed"] = args.seed
    if args.data:
        base["data"] = args.data
        base["synthetic"] = None
        base["schema_strict"] = args.schema_strict
    elif "data" not in base or base.get("data") is None:
        base["synthetic"] = _synthetic_spec(args)
    overrides = _parse_overrides(getattr(args, "set", None))
    if overrides:
        merged = base.get("hyperparams", {})
        for model, params in overrides.items():
            merged.setdefault(model, {}).update(params)
        base["hyperparams"] = merged
    if getattr(args, "jobs", None):
        base["jobs"] = args.jobs
    if getattr(args, "no_figures", False):
        base["figures"] = False
    base["output_dir"] = str(args.out)
    return harness.config_from_dict(base)


def _cmd_synth(args) -> int:
    kwargs = {}
    if args.noise_scale is not None:
        kwargs["noise_scale"] = args.noise_scale
    panel = generate_synthetic(
        seed=args.synth_seed, n_states=args.states,
        years=range(args.start_year, args.end_year + 1),
        config=SyntheticConfig(**kwargs),
    )
    write_panel(panel, args.out)
    print(f"wrote {len(panel.states)}x{len(panel.years)}x{len(panel.features)} panel to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    cfg = _config_from_args(args, models=(args.model,), lags=(args.lag,))
    report = harness.run_grid(cfg)
    cell = report.cells[0]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    doc = harness.report_to_dict(report)
    (outdir / "cell_report.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cell.error:
        print(f"{cell.model} lag={cell.lag} FAILED: {cell.error}")
        return 1
    m = cell.metrics
    print(f"{cell.model} lag={cell.lag}  MAE={m.mae:.3f} RMSE={m.rmse:.3f} "
          f"MAPE={m.mape:.2f} R2={m.r2:.3f}  train={m.train_seconds:.3f}s "
          f"predict={m.predict_seconds:.3f}s")
    return 0


def _cmd_grid(args) -> int:
    models = tuple(m.strip() for m in args.models.split(",")) if args.models else harness.MODEL_ORDER
    lags = _parse_lags(args.lags) if args.lags else tuple(range(1, 10))
    cfg = _config_from_args(args, models=models, lags=lags)
    report = harness.run_grid(cfg)
    written = harness.emit_reports(report, args.out, figures=cfg.figures)
    failures = [c for c in report.cells if c.error]
    print(harness.summary_table(report), end="")
    print(f"\n{len(report.cells)} cells ({len(failures)} failed); wrote:")
    for path in written:
        print(f"  {path}")
    return 1 if failures and len(failures) == len(report.cells) else 0


def _cmd_report(args) -> int:
    report = harness.load_grid_report(Path(args.run) / "grid_report.json")
    outdir = args.out or args.run
    written = harness.emit_reports(report, outdir, figures=not args.no_figures)
    print(harness.summary_table(report), end="")
    print(f"\nre-emitted {len(written)} files to {outdir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelcast",
        description="Panel forecasting toolkit: lag features, baseline regressors, "
                    "and block-bootstrap bagging ensembles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic panel CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--synth-seed", "--seed", dest="synth_seed", type=int, default=0)
    p.add_argument("--states", type=int, default=51)
    p.add_argument("--start-year", type=int, default=2011)
    p.add_argument("--end-year", type=int, default=2021)
    p.add_argument("--noise-scale", type=float, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("fit", help="train and score a single (model, lag) cell")
    _add_data_args(p)
    p.add_argument("--model", required=True, choices=harness.MODEL_ORDER)
    p.add_argument("--lag", required=True, type=int)
    p.add_argument("--seed", type=int, default=0, help="master experiment seed")
    p.add_argument("--out", default="runs/fit", help="output directory")
    p.add_argument("--config", help="JSON config file supplying hyperparameters")
    p.add_argument("--set", action="append", metavar="MODEL.PARAM=VALUE",
                   help="hyperparameter override (repeatable)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("grid", help="run the model-by-lag sweep and emit reports")
    _add_data_args(p)
    p.add_argument("--models", help="comma-separated subset (default: all seven)")
    p.add_argument("--lags", help="e.g. '1-9' or '1,2,4' (default: 1-9)")
    p.add_argument("--seed", type=int, default=0, help="master experiment seed")
    p.add_argument("--out", default="runs/grid", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel cell workers")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--set", action="append", metavar="MODEL.PARAM=VALUE",
                   help="hyperparameter override (repeatable)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("report", help="re-emit reports from a saved run")
    p.add_argument("--run", required=True, help="directory holding grid_report.json")
    p.add_argument("--out", help="destination (default: the run directory)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
