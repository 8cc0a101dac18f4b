"""Least-squares boosting over regression-tree stages.

Each stage fits a tree to the current residuals and contributes a fixed
fraction (the learning rate) of its prediction. The model starts from the
training-target mean, so stage-0 residuals are centered and training MSE is
non-increasing stage by stage for rates in (0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import RegressionTree, TreeHyperparams, fit_tree, predict_tree

STAGE_TREE_DEFAULTS = TreeHyperparams(max_depth=4, min_leaf=3, min_split_improvement=0.0)


@dataclass(frozen=True)
class BoostModel:
    base_offset: float
    stages: tuple[tuple[float, RegressionTree], ...]


def fit_lsboost(X: np.ndarray, y: np.ndarray, n_stages: int = 100,
                learning_rate: float = 0.1,
                hp: TreeHyperparams = STAGE_TREE_DEFAULTS) -> BoostModel:
    """Fit ``n_stages`` residual trees with a constant stage weight."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty training set")
    if n_stages < 1:
        raise ValueError(f"n_stages must be >= 1, got {n_stages}")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError(f"learning_rate must lie in (0, 1], got {learning_rate}")

    base = float(y.mean())
    current = np.full(len(y), base)
    stages = []
    for _ in range(n_stages):
        residuals = y - current
        stage = fit_tree(X, residuals, hp)
        current = current + learning_rate * predict_tree(stage, X)
        stages.append((learning_rate, stage))
    return BoostModel(base_offset=base, stages=tuple(stages))


def predict_lsboost(model: BoostModel, X: np.ndarray) -> np.ndarray:
    """Base offset plus the weighted sum of stage-tree predictions."""
    X = np.asarray(X, dtype=float)
    out = np.full(X.shape[0], model.base_offset)
    for weight, stage in model.stages:
        out += weight * predict_tree(stage, X)
    return out
