"""Greedy binary regression tree with axis-aligned splits and leaf means.

Splits minimize the summed within-child squared deviation from the child
means. Candidate thresholds are midpoints between consecutive distinct
sorted feature values. Ties are broken by lowest feature index, then lowest
threshold; at prediction time a value equal to the threshold routes left.
Every node stores the mean of the training targets that reached it, so any
fitted tree can be truncated to a shallower depth without refitting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TREE_FORMAT_VERSION = "regression-tree v1"


@dataclass(frozen=True)
class TreeHyperparams:
    max_depth: int = 8
    min_leaf: int = 3
    min_split_improvement: float = 0.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {self.min_leaf}")
        if self.min_split_improvement < 0.0:
            raise ValueError("min_split_improvement must be >= 0")


@dataclass
class TreeNode:
    value: float
    n_samples: int
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode
    n_features: int


def best_split(X: np.ndarray, y: np.ndarray, rows: np.ndarray | None = None,
               min_leaf: int = 1, min_split_improvement: float = 0.0):
    """Exhaustive search for the (feature, threshold) minimizing child SSE.

    Returns (feature, threshold, criterion) or None when no admissible
    split exists: both children must hold at least ``min_leaf`` rows and
    the split must reduce the node SSE by more than zero and by at least
    ``min_split_improvement``.
    """
    if rows is None:
        rows = np.arange(X.shape[0])
    n = len(rows)
    if n < 2 * min_leaf or n < 2:
        return None

    Xs = X[rows]
    ys = y[rows]
    # Center targets for conditioning; the criterion is shift-invariant.
    # Sort stability is immaterial: splits cannot fall inside a run of
    # equal feature values and cumulative sums at run boundaries are
    # order-independent.
    yc = ys - ys.mean()

    order = np.argsort(Xs, axis=0)
    sorted_x = np.take_along_axis(Xs, order, axis=0)
    sorted_y = yc[order]

    c1 = np.cumsum(sorted_y, axis=0)
    c2 = np.cumsum(sorted_y * sorted_y, axis=0)
    total1 = c1[-1]
    total2 = c2[-1]

    k = np.arange(1, n)[:, None].astype(float)
    crit = (c2[:-1] - c1[:-1] ** 2 / k) + (total2 - c2[:-1]) - (total1 - c1[:-1]) ** 2 / (n - k)

    invalid = sorted_x[1:] <= sorted_x[:-1]
    if min_leaf > 1:
        counts = np.arange(1, n)
        invalid |= ((counts < min_leaf) | (n - counts < min_leaf))[:, None]
    crit[invalid] = np.inf

    # argmin over the transpose scans feature-major, so the first minimum is
    # the tie-rule winner: lowest feature index, then lowest threshold.
    flat = int(np.argmin(crit.T))
    j, pos = divmod(flat, n - 1)
    best = float(crit[pos, j])
    if not np.isfinite(best):
        return None
    node_sse = float(yc @ yc)
    gain = node_sse - best
    if gain <= 0.0 or gain < min_split_improvement:
        return None

    threshold = float((sorted_x[pos, j] + sorted_x[pos + 1, j]) / 2.0)
    return j, threshold, best


def fit_tree(X: np.ndarray, y: np.ndarray, hp: TreeHyperparams = TreeHyperparams(),
             rng: np.random.Generator | None = None) -> RegressionTree:
    """Grow a tree by recursive greedy splitting.

    ``rng`` is accepted for interface uniformity with stochastic learners;
    plain greedy growth is deterministic and does not consume it.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError(f"inconsistent shapes X{X.shape}, y{y.shape}")
    if len(y) == 0:
        raise ValueError("empty training set")

    def grow(rows: np.ndarray, depth: int) -> TreeNode:
        node = TreeNode(value=float(y[rows].mean()), n_samples=len(rows))
        if depth >= hp.max_depth:
            return node
        found = best_split(X, y, rows, hp.min_leaf, hp.min_split_improvement)
        if found is None:
            return node
        j, threshold, _ = found
        mask = X[rows, j] <= threshold
        node.feature = j
        node.threshold = threshold
        node.left = grow(rows[mask], depth + 1)
        node.right = grow(rows[~mask], depth + 1)
        return node

    root = grow(np.arange(len(y)), 0)
    return RegressionTree(root=root, n_features=X.shape[1])


def predict_tree(tree: RegressionTree, X: np.ndarray, max_depth: int | None = None) -> np.ndarray:
    """Route each row to its leaf (x_j <= threshold goes left).

    ``max_depth`` predicts from the tree truncated at that depth, using the
    stored node means; None uses the full tree.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got shape {X.shape}")
    out = np.empty(X.shape[0])

    def walk(node: TreeNode, idx: np.ndarray, depth: int) -> None:
        if node.is_leaf or (max_depth is not None and depth >= max_depth):
            out[idx] = node.value
            return
        mask = X[idx, node.feature] <= node.threshold
        walk(node.left, idx[mask], depth + 1)
        walk(node.right, idx[~mask], depth + 1)

    walk(tree.root, np.arange(X.shape[0]), 0)
    return out


def tree_depth(tree: RegressionTree) -> int:
    def depth(node: TreeNode) -> int:
        if node.is_leaf:
            return 0
        return 1 + max(depth(node.left), depth(node.right))

    return depth(tree.root)


def truncate_tree(tree: RegressionTree, max_depth: int) -> RegressionTree:
    """Copy of the tree with nodes at ``max_depth`` turned into leaves."""
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")

    def copy(node: TreeNode, depth: int) -> TreeNode:
        if node.is_leaf or depth >= max_depth:
            return TreeNode(value=node.value, n_samples=node.n_samples)
        return TreeNode(
            value=node.value,
            n_samples=node.n_samples,
            feature=node.feature,
            threshold=node.threshold,
            left=copy(node.left, depth + 1),
            right=copy(node.right, depth + 1),
        )

    return RegressionTree(root=copy(tree.root, 0), n_features=tree.n_features)


def serialize_tree(tree: RegressionTree) -> str:
    """Versioned text form: one node per line with parent references."""
    lines = [f"# {TREE_FORMAT_VERSION}", f"n_features={tree.n_features}",
             "id,parent,side,kind,feature,threshold,value,n_samples"]
    queue = [(tree.root, -1, "root")]
    while queue:
        node, parent, side = queue.pop(0)
        node_id = len(lines) - 3
        if node.is_leaf:
            lines.append(f"{node_id},{parent},{side},leaf,,,{node.value!r},{node.n_samples}")
        else:
            lines.append(
                f"{node_id},{parent},{side},split,{node.feature},{node.threshold!r},"
                f"{node.value!r},{node.n_samples}"
            )
            queue.append((node.left, node_id, "L"))
            queue.append((node.right, node_id, "R"))
    return "\n".join(lines) + "\n"


def parse_tree(text: str) -> RegressionTree:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != f"# {TREE_FORMAT_VERSION}":
        raise ValueError("unrecognized tree format version")
    if not lines[1].startswith("n_features="):
        raise ValueError("missing n_features line")
    n_features = int(lines[1].split("=", 1)[1])

    nodes: dict[int, TreeNode] = {}
    links: list[tuple[int, int, str]] = []
    for ln in lines[3:]:
        node_id_s, parent_s, side, kind, feature_s, threshold_s, value_s, n_s = ln.split(",")
        node = TreeNode(value=float(value_s), n_samples=int(n_s))
        if kind == "split":
            node.feature = int(feature_s)
            node.threshold = float(threshold_s)
        nodes[int(node_id_s)] = node
        if side != "root":
            links.append((int(node_id_s), int(parent_s), side))
    for node_id, parent, side in links:
        if side == "L":
            nodes[parent].left = nodes[node_id]
        else:
            nodes[parent].right = nodes[node_id]
    return RegressionTree(root=nodes[0], n_features=n_features)
