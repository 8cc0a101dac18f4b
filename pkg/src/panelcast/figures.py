"""Render metric-versus-lag curves from a grid report to image files.

One PNG per metric, one line per model, written next to the delimited
report output. Rendering is headless (Agg backend).
"""
from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FIGURE_METRICS = ("mae", "rmse", "mape", "r2")

_METRIC_AXIS = {
    "mae": "MAE (percentage points)",
    "rmse": "RMSE (percentage points)",
    "mape": "MAPE (%)",
    "r2": "R^2",
}

_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
}

_MARKERS = ("o", "s", "^", "D", "v", "P", "X")


def plot_metric_curve(report, metric: str, ax=None):
    """Draw one metric's lag curves onto ``ax`` (created if missing)."""
    if ax is None:
        _, ax = plt.subplots()
    models = sorted({cell.model for cell in report.cells}, key=report.model_order)
    for i, model in enumerate(models):
        points = [
            (cell.lag, getattr(cell.metrics, metric))
            for cell in report.cells
            if cell.model == model and cell.metrics is not None
            and not math.isnan(getattr(cell.metrics, metric))
        ]
        if not points:
            continue
        points.sort()
        ax.plot(*zip(*points), marker=_MARKERS[i % len(_MARKERS)],
                markersize=4, linewidth=1.2, label=model)
    ax.set_xlabel("lag (years)")
    ax.set_ylabel(_METRIC_AXIS.get(metric, metric))
    ax.legend(loc="best", fontsize=8)
    return ax


def save_metric_figures(report, directory, metrics=FIGURE_METRICS, dpi: int = 150) -> list:
    """Write one `<metric>.png` per metric; returns the written paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.rc_context(_STYLE):
        for metric in metrics:
            fig, ax = plt.subplots()
            plot_metric_curve(report, metric, ax)
            fig.tight_layout()
            path = directory / f"{metric}.png"
            fig.savefig(path, dpi=dpi)
            plt.close(fig)
            written.append(path)
    return written
