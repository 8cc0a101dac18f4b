"""Point-forecast evaluation metrics and wall-clock phase timing."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

MAPE_UNDEFINED = "mape_undefined_zero_actual"
R2_UNDEFINED = "r2_undefined_constant_actuals"


@dataclass(frozen=True)
class MetricsReport:
    """MAE/RMSE in target units, MAPE in percent, R^2, and phase timings.

    Undefined metrics (MAPE with a zero actual, R^2 with constant actuals)
    are reported as NaN with an explanatory entry in ``flags`` rather than
    silently dropping terms.
    """

    mae: float
    rmse: float
    mape: float
    r2: float
    n: int
    train_seconds: float = 0.0
    predict_seconds: float = 0.0
    total_seconds: float = 0.0
    flags: tuple[str, ...] = ()


def compute_metrics(y: np.ndarray, yhat: np.ndarray) -> MetricsReport:
    """Evaluate MAE, RMSE, MAPE (with the 100% factor), and R^2.

    R^2 compares squared errors against deviations from the mean of ``y``
    itself. Timing fields are zero; attach them with :func:`with_timings`.
    """
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValueError(f"need equal-length vectors, got {y.shape} and {yhat.shape}")
    n = y.shape[0]
    if n == 0:
        raise ValueError("empty inputs")

    err = y - yhat
    mae = float(np.mean(np.abs(err)))
    rmse = float(math.sqrt(np.mean(err * err)))

    flags: list[str] = []
    if np.any(y == 0.0):
        mape = math.nan
        flags.append(MAPE_UNDEFINED)
    else:
        mape = float(100.0 * np.mean(np.abs(err / y)))

    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        r2 = math.nan
        flags.append(R2_UNDEFINED)
    else:
        r2 = 1.0 - float(np.sum(err * err)) / sst

    return MetricsReport(mae=mae, rmse=rmse, mape=mape, r2=r2, n=n, flags=tuple(flags))


def with_timings(report: MetricsReport, train_seconds: float, predict_seconds: float) -> MetricsReport:
    return replace(
        report,
        train_seconds=train_seconds,
        predict_seconds=predict_seconds,
        total_seconds=train_seconds + predict_seconds,
    )


def time_phase(phase, *args, **kwargs):
    """Run ``phase(*args, **kwargs)`` and return (result, seconds).

    Uses the monotonic performance counter; calls may nest freely.
    """
    start = time.perf_counter()
    result = phase(*args, **kwargs)
    return result, time.perf_counter() - start
