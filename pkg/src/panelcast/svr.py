"""Linear support vector regression with an insensitivity margin.

Residuals inside the margin cost nothing; outside it they are penalized
linearly with weight ``cost``, on top of a quadratic penalty on the weight
vector (the bias is unregularized). The fit is full-batch subgradient
descent with a decaying step from the trivial feasible point
(w = 0, b = mean(y)), returning the best-objective iterate seen, so the
result is never worse than that trivial point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SvrModel:
    weights: np.ndarray
    bias: float
    epsilon: float
    cost: float


def svr_objective(weights: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray,
                  cost: float, epsilon: float) -> float:
    residuals = y - (X @ weights + bias)
    hinge = np.maximum(0.0, np.abs(residuals) - epsilon)
    return 0.5 * float(weights @ weights) + cost * float(hinge.sum())


def fit_svr(X: np.ndarray, y: np.ndarray, cost: float = 1.0, epsilon: float = 0.1,
            epochs: int = 2000, seed: int = 0, step0: float = 0.1) -> SvrModel:
    """Deterministic subgradient descent on the margin-insensitive objective.

    The step at epoch k is ``step0 / (1 + k)``. ``seed`` is accepted for
    interface uniformity; every update is deterministic given the inputs.
    """
    del seed
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if cost <= 0.0:
        raise ValueError(f"cost must be positive, got {cost}")
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if len(y) == 0:
        raise ValueError("empty training set")

    w = np.zeros(X.shape[1])
    b = float(y.mean())
    best_obj = svr_objective(w, b, X, y, cost, epsilon)
    best_w, best_b = w.copy(), b

    for k in range(epochs):
        residuals = y - (X @ w + b)
        outside = np.abs(residuals) > epsilon
        signs = np.sign(residuals[outside])
        grad_w = w - cost * (signs @ X[outside])
        grad_b = -cost * float(signs.sum())
        step = step0 / (1.0 + k)
        w = w - step * grad_w
        b = b - step * grad_b
        obj = svr_objective(w, b, X, y, cost, epsilon)
        if obj < best_obj:
            best_obj = obj
            best_w, best_b = w.copy(), b

    return SvrModel(weights=best_w, bias=best_b, epsilon=epsilon, cost=cost)


def predict_svr(model: SvrModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[0]:
        raise ValueError(f"expected {model.weights.shape[0]} features, got shape {X.shape}")
    return X @ model.weights + model.bias
