"""Lag-expanded supervised matrices and train-only normalization.

A row targeting year t stacks the predictor block for years t, t-1, ..., t-L
followed by the target's own values for years t-1, ..., t-L, so a panel with
p predictors yields d = p*(L+1) + L columns. On the standard 51-state
2011-2021 panel (p = 89) that is d = 89*(L+1) + L with 51*(10-L) training
rows and 51 test rows.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .panel import PanelError, PanelTable


@dataclass(frozen=True)
class LagConfig:
    lag: int
    train_year_max: int = 2020
    test_year: int = 2021

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError(f"lag must be >= 1, got {self.lag}")
        if self.test_year != self.train_year_max + 1:
            raise ValueError(
                f"test_year must follow train_year_max "
                f"({self.test_year} != {self.train_year_max} + 1)"
            )


@dataclass(frozen=True)
class ColumnLabel:
    """Provenance of one design-matrix column."""

    feature: str
    offset: int
    is_lagged_target: bool = False

    @property
    def text(self) -> str:
        kind = "y" if self.is_lagged_target else "x"
        return f"{kind}:{self.feature}@t-{self.offset}"


@dataclass(frozen=True)
class SupervisedMatrix:
    """Design matrix with target vector and per-row/per-column provenance."""

    X: np.ndarray
    y: np.ndarray
    provenance: tuple[tuple[str, int], ...]
    column_labels: tuple[ColumnLabel, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"inconsistent shapes X{X.shape}, y{y.shape}")
        if len(self.provenance) != X.shape[0]:
            raise ValueError("provenance length != row count")
        if len(self.column_labels) != X.shape[1]:
            raise ValueError("column_labels length != column count")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def lag(self) -> int:
        return max(lbl.offset for lbl in self.column_labels)


@dataclass(frozen=True)
class NormalizationParams:
    center: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        scale = np.asarray(self.scale, dtype=float)
        if center.shape != scale.shape or center.ndim != 1:
            raise ValueError("center and scale must be equal-length vectors")
        if np.any(scale <= 0.0):
            raise ValueError("every scale must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)


def build_supervised(panel: PanelTable, cfg: LagConfig, split: str) -> SupervisedMatrix:
    """Assemble the lag-expanded matrix for the requested split.

    Training rows target years first_year+lag .. train_year_max; the test
    split targets test_year only. Rows are ordered by (target year, state);
    no row mixes states.
    """
    if split not in ("train", "test"):
        raise ValueError(f"split must be 'train' or 'test', got {split!r}")
    lag = cfg.lag
    years = panel.years
    if lag > len(years) - 2:
        raise PanelError(
            f"lag {lag} too large for a {len(years)}-year panel (max {len(years) - 2})"
        )
    if split == "train":
        target_years = [y for y in years if years[0] + lag <= y <= cfg.train_year_max]
        if not target_years:
            raise PanelError(
                f"no training target years for lag {lag} with train_year_max {cfg.train_year_max}"
            )
    else:
        target_years = [cfg.test_year]
    for t in target_years:
        if t not in years or t - lag < years[0]:
            raise PanelError(f"panel does not span years {t - lag}..{t} needed for lag {lag}")

    predictors = panel.features[1:]
    p = len(predictors)
    labels = [
        ColumnLabel(name, k) for k in range(lag + 1) for name in predictors
    ] + [
        ColumnLabel(panel.features[0], k, is_lagged_target=True) for k in range(1, lag + 1)
    ]

    n_states = len(panel.states)
    n = len(target_years) * n_states
    X = np.empty((n, p * (lag + 1) + lag))
    y = np.empty(n)
    provenance = []
    for r, t in enumerate(target_years):
        i = panel.year_index(t)
        rows = slice(r * n_states, (r + 1) * n_states)
        for k in range(lag + 1):
            X[rows, k * p:(k + 1) * p] = panel.values[i - k, :, 1:]
        for k in range(1, lag + 1):
            X[rows, p * (lag + 1) + (k - 1)] = panel.values[i - k, :, 0]
        y[rows] = panel.values[i, :, 0]
        provenance.extend((state, t) for state in panel.states)

    return SupervisedMatrix(X=X, y=y, provenance=tuple(provenance), column_labels=tuple(labels))


def fit_normalization(train: SupervisedMatrix) -> NormalizationParams:
    """Per-column z-score parameters from training data only.

    Centers are column means; scales are sample standard deviations
    (ddof=1), with constant columns assigned scale 1 so the transform
    stays total.
    """
    if train.n < 2:
        raise ValueError(f"need at least 2 rows to fit normalization, got {train.n}")
    center = train.X.mean(axis=0)
    scale = train.X.std(axis=0, ddof=1)
    scale[scale == 0.0] = 1.0
    return NormalizationParams(center=center, scale=scale)


def apply_normalization(m: SupervisedMatrix, p: NormalizationParams) -> SupervisedMatrix:
    """(x - center) / scale per column; targets, labels, provenance unchanged."""
    if m.d != p.center.shape[0]:
        raise ValueError(f"matrix has {m.d} columns, params have {p.center.shape[0]}")
    return replace(m, X=(m.X - p.center) / p.scale)


def invert_normalization(m: SupervisedMatrix, p: NormalizationParams) -> SupervisedMatrix:
    if m.d != p.center.shape[0]:
        raise ValueError(f"matrix has {m.d} columns, params have {p.center.shape[0]}")
    return replace(m, X=m.X * p.scale + p.center)


def write_supervised_csv(m: SupervisedMatrix, path) -> None:
    """Debug dump: provenance, labelled feature columns, and the target."""
    import csv
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "target_year"] + [lbl.text for lbl in m.column_labels] + ["target"])
        for i, (state, year) in enumerate(m.provenance):
            writer.writerow([state, year] + [repr(float(v)) for v in m.X[i]] + [repr(float(m.y[i]))])
