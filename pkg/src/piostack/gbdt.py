"""Histogram-based gradient-boosted regression trees with logistic loss.

Each boosting round fits one binary tree to the current gradients
(g = y_hat - y) and hessians (hss = y_hat * (1 - y_hat)). Feature values
are bucketed once up front into rank-based histogram bins, so split search
reduces to cumulative sums over per-bin gradient/hessian totals. Trees are
grown leaf-wise (best split first) up to a leaf cap and depth cap, the way
fast GBDT libraries do.

Split gain for a parent with totals (G, H) split into (GL, HL) and
(GR, HR):

    gain = GL^2/(HL + lam) + GR^2/(HR + lam) - G^2/(H + lam)

and the leaf value is the Newton step -G/(H + lam). Boosting stops early
when no root split reaches ``min_gain``, which leaves the model at the
prior: the returned score for every instance is then
sigmoid(base_score) = pos/(pos + neg).

Everything is deterministic: features are scanned in index order and ties
in gain resolve to the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, DataError, SchemaError


@dataclass(frozen=True)
class GbdtConfig:
    num_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 4
    max_bins: int = 255
    reg_lambda: float = 1.0
    min_gain: float = 1e-7
    max_leaves: int = 15
    min_child_samples: int = 1

    def __post_init__(self):
        if self.num_rounds <= 0 or self.learning_rate <= 0:
            raise ConfigError("num_rounds and learning_rate must be positive")
        if self.max_depth < 1 or self.max_leaves < 2 or self.max_bins < 2:
            raise ConfigError("max_depth >= 1, max_leaves >= 2, max_bins >= 2 required")
        if self.reg_lambda < 0 or self.min_gain < 0 or self.min_child_samples < 1:
            raise ConfigError("reg_lambda, min_gain >= 0 and min_child_samples >= 1 required")

    def as_dict(self) -> dict:
        return {
            "num_rounds": self.num_rounds,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "max_bins": self.max_bins,
            "reg_lambda": self.reg_lambda,
            "min_gain": self.min_gain,
            "max_leaves": self.max_leaves,
            "min_child_samples": self.min_child_samples,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GbdtConfig":
        return cls(**obj)


@dataclass
class TreeNode:
    """Internal node (feature, threshold, children) or leaf (value).

    Split semantics: x[feature] <= threshold routes left. Thresholds are
    always histogram bin boundaries.
    """

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        self._fill(X, np.arange(X.shape[0]), out)
        return out

    def _fill(self, X: np.ndarray, idx: np.ndarray, out: np.ndarray) -> None:
        if self.is_leaf:
            out[idx] = self.value
            return
        go_left = X[idx, self.feature] <= self.threshold
        self.left._fill(X, idx[go_left], out)
        self.right._fill(X, idx[~go_left], out)

    def leaves(self) -> Iterator["TreeNode"]:
        if self.is_leaf:
            yield self
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        if "leaf" in obj:
            return cls(value=float(obj["leaf"]))
        return cls(
            feature=int(obj["feature"]),
            threshold=float(obj["threshold"]),
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
        )


class FeatureBins:
    """Rank-based histogram bins: one group of adjacent unique values per bin.

    Bin edges are midpoints between adjacent unique values (between groups
    of uniques when a feature has more distinct values than max_bins), so
    any strictly monotone transform of a feature leaves every sample's bin
    index unchanged.
    """

    def __init__(self, X: np.ndarray, max_bins: int):
        self.edges: list[np.ndarray] = []
        for f in range(X.shape[1]):
            uniq = np.unique(X[:, f])
            if len(uniq) <= 1:
                self.edges.append(np.empty(0, dtype=np.float64))
            elif len(uniq) <= max_bins:
                self.edges.append((uniq[:-1] + uniq[1:]) / 2.0)
            else:
                groups = np.array_split(uniq, max_bins)
                cuts = [
                    (groups[k][-1] + groups[k + 1][0]) / 2.0
                    for k in range(len(groups) - 1)
                ]
                self.edges.append(np.asarray(cuts, dtype=np.float64))

    def n_bins(self, feature: int) -> int:
        return len(self.edges[feature]) + 1

    def transform(self, X: np.ndarray) -> np.ndarray:
        binned = np.empty(X.shape, dtype=np.int32)
        for f, edges in enumerate(self.edges):
            binned[:, f] = np.searchsorted(edges, X[:, f], side="left")
        return binned


@dataclass
class _Split:
    gain: float
    feature: int
    boundary: int  # index into edges[feature]; left = bins 0..boundary
    threshold: float


def _best_split(
    binned: np.ndarray,
    bins: FeatureBins,
    g: np.ndarray,
    h: np.ndarray,
    idx: np.ndarray,
    config: GbdtConfig,
) -> _Split | None:
    """Scan all features/boundaries; ties go to the lowest feature, then threshold."""
    g_total = float(g[idx].sum())
    h_total = float(h[idx].sum())
    lam = config.reg_lambda
    parent_score = g_total * g_total / (h_total + lam)
    best: _Split | None = None
    for f in range(binned.shape[1]):
        edges = bins.edges[f]
        if len(edges) == 0:
            continue
        col = binned[idx, f]
        nb = bins.n_bins(f)
        g_hist = np.bincount(col, weights=g[idx], minlength=nb)
        h_hist = np.bincount(col, weights=h[idx], minlength=nb)
        c_hist = np.bincount(col, minlength=nb)
        g_left = np.cumsum(g_hist)[:-1]
        h_left = np.cumsum(h_hist)[:-1]
        c_left = np.cumsum(c_hist)[:-1]
        c_right = len(idx) - c_left
        gains = (
            g_left**2 / (h_left + lam)
            + (g_total - g_left) ** 2 / (h_total - h_left + lam)
            - parent_score
        )
        gains[(c_left < config.min_child_samples) | (c_right < config.min_child_samples)] = -np.inf
        b = int(np.argmax(gains))  # first max: lowest boundary, lowest threshold
        if np.isfinite(gains[b]) and (best is None or gains[b] > best.gain):
            best = _Split(gain=float(gains[b]), feature=f, boundary=b, threshold=float(edges[b]))
    return best


@dataclass
class _GrowingNode:
    node: TreeNode
    idx: np.ndarray
    depth: int


def _leaf_value(g: np.ndarray, h: np.ndarray, idx: np.ndarray, lam: float) -> float:
    return float(-g[idx].sum() / (h[idx].sum() + lam))


def _grow_tree(
    X_binned: np.ndarray,
    bins: FeatureBins,
    g: np.ndarray,
    h: np.ndarray,
    config: GbdtConfig,
) -> tuple[TreeNode, np.ndarray] | None:
    """Grow one tree leaf-wise. Returns (root, per-sample outputs), or None
    when not even the root reaches min_gain."""
    n = X_binned.shape[0]
    all_idx = np.arange(n)
    root = TreeNode(value=_leaf_value(g, h, all_idx, config.reg_lambda))
    root_split = _best_split(X_binned, bins, g, h, all_idx, config)
    if root_split is None or root_split.gain < config.min_gain:
        return None

    # heap entries: (-gain, insertion order, growing node, split)
    counter = 0
    heap: list[tuple[float, int, _GrowingNode, _Split]] = []
    heapq.heappush(heap, (-root_split.gain, counter, _GrowingNode(root, all_idx, 0), root_split))
    outputs = np.full(n, root.value, dtype=np.float64)
    n_leaves = 1

    while heap and n_leaves < config.max_leaves:
        neg_gain, _, grow, split = heapq.heappop(heap)
        if -neg_gain < config.min_gain:
            break
        node, idx = grow.node, grow.idx
        go_left = X_binned[idx, split.feature] <= split.boundary
        left_idx, right_idx = idx[go_left], idx[~go_left]

        node.feature = split.feature
        node.threshold = split.threshold
        node.left = TreeNode(value=_leaf_value(g, h, left_idx, config.reg_lambda))
        node.right = TreeNode(value=_leaf_value(g, h, right_idx, config.reg_lambda))
        outputs[left_idx] = node.left.value
        outputs[right_idx] = node.right.value
        n_leaves += 1

        for child, child_idx in ((node.left, left_idx), (node.right, right_idx)):
            if grow.depth + 1 >= config.max_depth or len(child_idx) < 2 * config.min_child_samples:
                continue
            child_split = _best_split(X_binned, bins, g, h, child_idx, config)
            if child_split is not None and child_split.gain >= config.min_gain:
                counter += 1
                heapq.heappush(
                    heap,
                    (-child_split.gain, counter, _GrowingNode(child, child_idx, grow.depth + 1), child_split),
                )
    return root, outputs


def _logistic_loss(margin: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.maximum(margin, 0) - margin * y + np.log1p(np.exp(-np.abs(margin)))))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class BoostedTrees:
    """One label's boosted ensemble: prior logit plus shrunken tree outputs."""

    base_score: float
    trees: list[TreeNode]
    learning_rate: float
    n_features: int
    loss_history: list[float] = field(default_factory=list)

    def decision_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected (n, {self.n_features}) feature matrix")
        margin = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += self.learning_rate * tree.predict(X)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.decision_margin(X))

    def to_dict(self) -> dict:
        return {
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BoostedTrees":
        try:
            return cls(
                base_score=float(obj["base_score"]),
                trees=[TreeNode.from_dict(t) for t in obj["trees"]],
                learning_rate=float(obj["learning_rate"]),
                n_features=int(obj["n_features"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad boosted-trees payload: {exc}") from exc


def fit_gbdt(X: np.ndarray, y: np.ndarray, config: GbdtConfig | None = None) -> BoostedTrees:
    """Boost regression trees on one binary target with logistic loss.

    The training logloss trajectory (entry 0 = loss at the prior) is kept
    on the model; it is non-increasing by construction of the Newton leaf
    values with conservative shrinkage.
    """
    config = config or GbdtConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, f) and y must be (n,)")
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite feature value in training matrix")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos + n_neg != len(y):
        raise DataError("targets must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise DataError("training targets are single-class; cannot boost")

    bins = FeatureBins(X, config.max_bins)
    binned = bins.transform(X)
    model = BoostedTrees(
        base_score=float(np.log(n_pos / n_neg)),
        trees=[],
        learning_rate=config.learning_rate,
        n_features=X.shape[1],
    )
    margin = np.full(len(y), model.base_score, dtype=np.float64)
    model.loss_history.append(_logistic_loss(margin, y))

    for _ in range(config.num_rounds):
        p = _sigmoid(margin)
        g = p - y
        h = p * (1.0 - p)
        grown = _grow_tree(binned, bins, g, h, config)
        if grown is None:
            break  # best available gain under min_gain: model stays at prior/current
        tree, outputs = grown
        model.trees.append(tree)
        margin += config.learning_rate * outputs
        model.loss_history.append(_logistic_loss(margin, y))
    return model
