"""Bagged regression-tree ensembles over a stratified block bootstrap.

Plain bagging fits one tree per resample and averages uniformly. The
weighted variant additionally (a) early-stops each tree's depth on its own
out-of-bag RMSE, keeping the best-depth snapshot, and (b) aggregates with
weights proportional to the inverse of that validation RMSE.

Resampling draws whole time-contiguous blocks, never single rows, and is
stratified: each stratum (by default, each state) contributes exactly its
original block count to every resample, so no resample distorts the
cross-sectional composition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .lagfeat import SupervisedMatrix
from .tree import (
    RegressionTree,
    TreeHyperparams,
    fit_tree,
    parse_tree,
    predict_tree,
    serialize_tree,
    tree_depth,
    truncate_tree,
)

ENSEMBLE_FORMAT_VERSION = "tree-ensemble v1"


@dataclass(frozen=True)
class EarlyStopRule:
    patience: int = 2
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.tolerance < 0.0:
            raise ValueError("tolerance must be >= 0")


@dataclass(frozen=True)
class BaggingConfig:
    """Knobs for both ensemble variants.

    ``block_size=None`` derives the size from the data: one block per state
    trajectory, halved for lags of 2 or less to raise resample variability.
    ``strata_key`` is "state", None (single stratum), or a callable mapping
    a (state, target_year) provenance entry to a stratum label.
    """

    n_learners: int = 100
    block_size: int | None = None
    lag: int | None = None
    strata_key: object = "state"
    rmse_floor: float = 1e-8
    early_stop: EarlyStopRule = EarlyStopRule()
    seed: int = 0

    def __post_init__(self):
        if self.n_learners < 1:
            raise ValueError("n_learners must be >= 1")
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.rmse_floor <= 0.0:
            raise ValueError("rmse_floor must be positive")


@dataclass(frozen=True)
class BootstrapPlan:
    """Block partition of the training rows plus any drawn resamples.

    ``blocks[b]`` lists the row indices of block b (time-ordered within one
    stratum); ``samples[m]`` lists the block ids drawn for resample m and
    ``oob_rows[m]`` the rows appearing in none of them.
    """

    blocks: tuple
    block_strata: tuple
    samples: tuple = ()
    oob_rows: tuple = ()

    def sample_rows(self, i: int) -> np.ndarray:
        parts = [self.blocks[b] for b in self.samples[i]]
        return np.concatenate(parts)


@dataclass(frozen=True)
class EnsembleModel:
    learners: tuple
    weights: np.ndarray
    validation_rmse: np.ndarray
    kind: str

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (len(self.learners),):
            raise ValueError("one weight per learner required")
        if np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "validation_rmse",
                           np.asarray(self.validation_rmse, dtype=float))


def _stratum_labels(train: SupervisedMatrix, strata_key) -> list:
    if strata_key is None:
        return ["all"] * train.n
    if strata_key == "state":
        return [state for state, _ in train.provenance]
    if callable(strata_key):
        return [strata_key(entry) for entry in train.provenance]
    raise ValueError(f"unsupported strata_key {strata_key!r}")


def resolve_block_size(train: SupervisedMatrix, lag: int | None = None) -> int:
    """Default block size: one state trajectory, halved when lag <= 2."""
    if lag is None:
        lag = train.lag
    years_per_state = len({year for _, year in train.provenance})
    if lag <= 2:
        return max(1, years_per_state // 2)
    return max(1, years_per_state)


def make_blocks(train: SupervisedMatrix, block_size: int, strata_key="state") -> BootstrapPlan:
    """Partition rows into per-stratum time blocks of ``block_size``.

    Rows are grouped by stratum and ordered by target year inside each
    stratum; consecutive runs of ``block_size`` rows form the blocks, with
    the final partial block kept. Blocks never straddle strata.
    """
    if train.n == 0:
        raise ValueError("empty training matrix")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    labels = _stratum_labels(train, strata_key)
    order = sorted(range(train.n), key=lambda i: (str(labels[i]), train.provenance[i][1]))

    blocks, strata = [], []
    start = 0
    while start < len(order):
        stratum = labels[order[start]]
        end = start
        while end < len(order) and labels[order[end]] == stratum:
            end += 1
        for lo in range(start, end, block_size):
            hi = min(lo + block_size, end)
            blocks.append(np.array(order[lo:hi]))
            strata.append(str(stratum))
        start = end
    return BootstrapPlan(blocks=tuple(blocks), block_strata=tuple(strata))


def draw_samples(plan: BootstrapPlan, n_samples: int, seed: int) -> BootstrapPlan:
    """Draw block resamples, stratified and with replacement.

    For every resample, each stratum contributes exactly as many drawn
    blocks as it originally holds, chosen uniformly with replacement from
    that stratum's own blocks. Resample i depends only on (seed, i), so any
    execution order reproduces the same plan.
    """
    if not plan.blocks:
        raise ValueError("plan has no blocks")
    by_stratum: dict[str, list[int]] = {}
    for b, stratum in enumerate(plan.block_strata):
        by_stratum.setdefault(stratum, []).append(b)
    strata = sorted(by_stratum)

    n_rows = sum(len(block) for block in plan.blocks)
    samples, oob = [], []
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        drawn: list[int] = []
        for stratum in strata:
            ids = by_stratum[stratum]
            picks = rng.integers(0, len(ids), size=len(ids))
            drawn.extend(ids[p] for p in picks)
        samples.append(tuple(drawn))
        covered = np.zeros(n_rows, dtype=bool)
        for b in set(drawn):
            covered[plan.blocks[b]] = True
        oob.append(np.flatnonzero(~covered))
    return replace(plan, samples=tuple(samples), oob_rows=tuple(oob))


def _plan_for(train: SupervisedMatrix, cfg: BaggingConfig) -> BootstrapPlan:
    block_size = cfg.block_size
    if block_size is None:
        block_size = resolve_block_size(train, cfg.lag)
    plan = make_blocks(train, block_size, cfg.strata_key)
    return draw_samples(plan, cfg.n_learners, cfg.seed)


def _tail_holdout_rows(train: SupervisedMatrix) -> np.ndarray:
    """Fallback validation set: the rows with the latest target years (~20%)."""
    n_holdout = max(1, int(np.ceil(0.2 * train.n)))
    order = sorted(range(train.n), key=lambda i: (train.provenance[i][1], train.provenance[i][0]))
    return np.array(order[-n_holdout:])


def _rmse(y: np.ndarray, yhat: np.ndarray) -> float:
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def weights_from_validation_rmse(validation_rmse: np.ndarray, rmse_floor: float) -> np.ndarray:
    """Normalized inverse-RMSE weights with a floor keeping them finite."""
    raw = 1.0 / np.maximum(np.asarray(validation_rmse, dtype=float), rmse_floor)
    return raw / raw.sum()


def fit_ermbag(train: SupervisedMatrix, cfg: BaggingConfig,
               hp: TreeHyperparams = TreeHyperparams()) -> EnsembleModel:
    """Uniform-average bagging: one full-depth tree per block resample."""
    plan = _plan_for(train, cfg)
    learners = []
    validation = []
    for i in range(cfg.n_learners):
        rows = plan.sample_rows(i)
        model = fit_tree(train.X[rows], train.y[rows], hp)
        learners.append(model)
        oob = plan.oob_rows[i]
        if len(oob):
            validation.append(_rmse(train.y[oob], predict_tree(model, train.X[oob])))
        else:
            validation.append(float("nan"))
    weights = np.full(cfg.n_learners, 1.0 / cfg.n_learners)
    return EnsembleModel(learners=tuple(learners), weights=weights,
                         validation_rmse=np.array(validation), kind="uniform")


def fit_ermbag_plus(train: SupervisedMatrix, cfg: BaggingConfig,
                    hp: TreeHyperparams = TreeHyperparams()) -> EnsembleModel:
    """Weighted bagging with per-learner depth early stopping.

    Each tree is grown on its resample, then rolled out depth by depth
    against that learner's out-of-bag rows: growth stops once the OOB RMSE
    has failed to improve by the early-stop tolerance for ``patience``
    consecutive depths, and the best-depth snapshot is kept. Learners whose
    resample covers every row fall back to a fixed tail-year holdout.
    Weights are the normalized inverses of the per-learner validation RMSE,
    floored to stay finite.
    """
    plan = _plan_for(train, cfg)
    tail_rows: np.ndarray | None = None

    learners = []
    validation = []
    for i in range(cfg.n_learners):
        rows = plan.sample_rows(i)
        oob = plan.oob_rows[i]
        if len(oob) == 0:
            if tail_rows is None:
                tail_rows = _tail_holdout_rows(train)
            oob = tail_rows
        full = fit_tree(train.X[rows], train.y[rows], hp)
        X_val, y_val = train.X[oob], train.y[oob]

        best_rmse = _rmse(y_val, predict_tree(full, X_val, max_depth=0))
        best_depth = 0
        stalled = 0
        for depth in range(1, tree_depth(full) + 1):
            rmse = _rmse(y_val, predict_tree(full, X_val, max_depth=depth))
            if rmse < best_rmse - cfg.early_stop.tolerance:
                best_rmse = rmse
                best_depth = depth
                stalled = 0
            else:
                stalled += 1
                if stalled >= cfg.early_stop.patience:
                    break
        learners.append(truncate_tree(full, best_depth))
        validation.append(best_rmse)

    validation = np.array(validation)
    weights = weights_from_validation_rmse(validation, cfg.rmse_floor)
    return EnsembleModel(learners=tuple(learners), weights=weights,
                         validation_rmse=validation, kind="weighted")


def predict_ensemble(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.zeros(X.shape[0])
    for weight, learner in zip(model.weights, model.learners):
        out += weight * predict_tree(learner, X)
    return out


def save_ensemble(model: EnsembleModel, cfg: BaggingConfig, directory) -> None:
    """Manifest plus one tree file per learner, for reproducibility snapshots."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": ENSEMBLE_FORMAT_VERSION,
        "kind": model.kind,
        "n_learners": len(model.learners),
        "seed": cfg.seed,
        "block_size": cfg.block_size,
        "rmse_floor": cfg.rmse_floor,
        "early_stop": {"patience": cfg.early_stop.patience,
                       "tolerance": cfg.early_stop.tolerance},
        "weights": [repr(float(w)) for w in model.weights],
        "validation_rmse": [repr(float(v)) for v in model.validation_rmse],
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for i, learner in enumerate(model.learners):
        (directory / f"tree_{i:04d}.txt").write_text(serialize_tree(learner), encoding="utf-8")


def load_ensemble(directory) -> EnsembleModel:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != ENSEMBLE_FORMAT_VERSION:
        raise ValueError(f"unrecognized ensemble format in {directory}")
    learners = tuple(
        parse_tree((directory / f"tree_{i:04d}.txt").read_text(encoding="utf-8"))
        for i in range(manifest["n_learners"])
    )
    return EnsembleModel(
        learners=learners,
        weights=np.array([float(w) for w in manifest["weights"]]),
        validation_rmse=np.array([float(v) for v in manifest["validation_rmse"]]),
        kind=manifest["kind"],
    )
