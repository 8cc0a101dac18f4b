"""Synthetic state-by-year panels with a known generating process.

The real integrated panel is not redistributable, so experiments and tests
run on synthetic tables carrying the same 90-feature schema. The target is
a fixed affine function of a small driver subset plus a contribution from
its own previous year and AR(1) state-level noise, so tests can recompute
the noiseless truth exactly via :func:`target_truth_path`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .panel import PanelTable, PanelError
from .schema import CURRENCY, canonical_features

# 50 states + DC, the usual 51-unit panel.
STATE_CODES = (
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DC", "DE", "FL", "GA", "HI",
    "IA", "ID", "IL", "IN", "KS", "KY", "LA", "MA", "MD", "ME", "MI", "MN",
    "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH",
    "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA",
    "WI", "WV", "WY",
)

# Plausible value ranges used to draw per-state base levels, by category.
_CATEGORY_RANGES = {
    "age": (15.0, 35.0),
    "race": (2.0, 65.0),
    "gender": (45.0, 55.0),
    "house": (5.0, 95.0),
    "economy": (8.0, 65.0),
    "chronic": (3.0, 45.0),
}
_INCOME_RANGE = (30_000.0, 70_000.0)


@dataclass(frozen=True)
class SyntheticConfig:
    """Generating-process parameters.

    The target for state s in year t is
    ``base + sum_j coeff_j * driver_j[s, t] + lag_coeff * y[s, t-1] + e[s, t]``
    started from the steady-state value implied by the first year's drivers,
    with ``e`` an AR(1) noise path per state, then clipped to target_bounds.
    """

    target_base: float = 1.6
    target_lag_coeff: float = 0.55
    drivers: tuple[tuple[str, float], ...] = (
        ("age_60_plus_pct", 0.060),
        ("cdi_smoking_pct", 0.050),
        ("poverty_pct", 0.040),
    )
    noise_scale: float = 0.35
    noise_ar: float = 0.6
    feature_trend_scale: float = 0.25
    feature_noise_scale: float = 0.6
    target_bounds: tuple[float, float] = (0.5, 95.0)

    def __post_init__(self):
        if not 0.0 <= self.target_lag_coeff < 1.0:
            raise ValueError("target_lag_coeff must lie in [0, 1)")
        if self.noise_scale < 0.0:
            raise ValueError("noise_scale must be non-negative")


def target_truth_path(driver_values: np.ndarray, config: SyntheticConfig,
                      noise: np.ndarray | None = None) -> np.ndarray:
    """Target path given driver values (n_years, n_states, n_drivers).

    With ``noise=None`` this is the exact noiseless generating function used
    by :func:`generate_synthetic`; tests use it as the ground-truth oracle.
    """
    drive = driver_values @ np.array([c for _, c in config.drivers])
    n_years, n_states = drive.shape
    if noise is None:
        noise = np.zeros((n_years, n_states))
    y = np.empty((n_years, n_states))
    previous = (config.target_base + drive[0]) / (1.0 - config.target_lag_coeff)
    for t in range(n_years):
        y[t] = config.target_base + drive[t] + config.target_lag_coeff * previous + noise[t]
        previous = y[t]
    lo, hi = config.target_bounds
    return np.clip(y, lo, hi)


def _ar1_path(rng: np.random.Generator, shape: tuple[int, ...], ar: float, scale: float) -> np.ndarray:
    shocks = rng.standard_normal(shape) * scale
    path = np.empty_like(shocks)
    path[0] = shocks[0]
    for t in range(1, shape[0]):
        path[t] = ar * path[t - 1] + shocks[t]
    return path


def generate_synthetic(seed: int, n_states: int = 51,
                       years: tuple[int, ...] | list[int] = tuple(range(2011, 2022)),
                       config: SyntheticConfig = SyntheticConfig()) -> PanelTable:
    """Deterministic synthetic panel carrying the full canonical schema.

    Pure function of its arguments: the same call yields a bit-identical
    table. Percent features are clipped to [0, 100].
    """
    if n_states < 2:
        raise PanelError(f"need at least 2 states, got {n_states}")
    years = tuple(sorted(years))
    if len(years) < 3:
        raise PanelError(f"need at least 3 years, got {len(years)}")
    if any(b - a != 1 for a, b in zip(years, years[1:])):
        raise PanelError("years must be contiguous")

    if n_states <= len(STATE_CODES):
        states = tuple(sorted(STATE_CODES[:n_states]))
    else:
        extra = tuple(f"Z{i:02d}" for i in range(n_states - len(STATE_CODES)))
        states = tuple(sorted(STATE_CODES + extra))

    specs = canonical_features()
    rng = np.random.default_rng(seed)
    n_years, n_feat = len(years), len(specs)
    values = np.empty((n_years, n_states, n_feat))

    time = np.arange(n_years, dtype=float)
    for k, spec in enumerate(specs[1:], start=1):
        if spec.unit == CURRENCY:
            lo, hi = _INCOME_RANGE
            scale = 400.0
        else:
            lo, hi = _CATEGORY_RANGES[spec.category]
            scale = 1.0
        base = rng.uniform(lo, hi, size=n_states)
        slope = rng.normal(0.0, config.feature_trend_scale * scale, size=n_states)
        wiggle = _ar1_path(rng, (n_years, n_states), 0.5, config.feature_noise_scale * scale)
        series = base[None, :] + slope[None, :] * time[:, None] + wiggle
        if spec.unit == CURRENCY:
            values[:, :, k] = np.maximum(series, 1_000.0)
        else:
            values[:, :, k] = np.clip(series, 0.0, 100.0)

    names = [s.name for s in specs]
    driver_idx = [names.index(n) for n, _ in config.drivers]
    noise = _ar1_path(rng, (n_years, n_states), config.noise_ar, config.noise_scale)
    values[:, :, 0] = target_truth_path(values[:, :, driver_idx], config, noise)

    return PanelTable(states=states, years=years, features=tuple(names), values=values)
