"""CART classification tree whose split score adds the fraction of
consistency pairs kept together to the Gini gain."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .metrics import Predictions
from .pairs import PairSet
from .validation import check_labels, check_matrix, check_pairs, feature_names_of


@dataclass
class TreeConfig:
    eta: float = 0.0
    max_depth: int = 5
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")


@dataclass
class SplitScore:
    gini_gain: float
    intact_fraction: float
    combined: float
    pairs_at_node: int


@dataclass
class Node:
    depth: int
    counts: tuple[int, int]
    pairs_at_node: int
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None
    score: SplitScore | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n_samples(self) -> int:
        return self.counts[0] + self.counts[1]

    @property
    def probability(self) -> float:
        return self.counts[1] / self.n_samples

    @property
    def label(self) -> int:
        # ties go to the positive class
        return int(self.counts[1] >= self.counts[0])


@dataclass
class DecisionTree:
    nodes: list[Node]
    n_features: int
    feature_names: list[str]
    config: TreeConfig = field(default_factory=TreeConfig)

    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def apply(self, X) -> np.ndarray:
        """Leaf node index reached by every row."""
        X = check_matrix(X, self.n_features)
        at = np.zeros(X.shape[0], dtype=np.int64)
        for k, node in enumerate(self.nodes):
            if node.is_leaf:
                continue
            here = at == k
            go_left = X[:, node.feature] <= node.threshold
            at[here & go_left] = node.left
            at[here & ~go_left] = node.right
        return at

    def used_features(self) -> set[int]:
        return {node.feature for node in self.nodes if not node.is_leaf}

    def to_dict(self) -> dict:
        return {
            "kind": "tree",
            "feature_names": list(self.feature_names),
            "n_features": self.n_features,
            "config": asdict(self.config),
            "nodes": [
                {k: v for k, v in asdict(node).items() if v is not None} for node in self.nodes
            ],
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, payload) -> "DecisionTree":
        nodes = []
        for raw in payload["nodes"]:
            raw = dict(raw)
            raw["counts"] = tuple(raw["counts"])
            if "score" in raw:
                raw["score"] = SplitScore(**raw["score"])
            nodes.append(Node(**raw))
        return cls(nodes, int(payload["n_features"]), list(payload["feature_names"]),
                   TreeConfig(**payload.get("config", {})))

    def render(self) -> str:
        lines = []

        def walk(k, indent):
            node = self.nodes[k]
            pad = "|   " * indent
            if node.is_leaf:
                lines.append(f"{pad}leaf: class {node.label} (p={node.probability:.3f}, n={node.n_samples})")
                return
            name = self.feature_names[node.feature]
            lines.append(f"{pad}{name} <= {node.threshold:g}")
            walk(node.left, indent + 1)
            lines.append(f"{pad}{name} > {node.threshold:g}")
            walk(node.right, indent + 1)

        walk(0, 0)
        return "\n".join(lines)


def candidate_thresholds(values) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values."""
    v = np.unique(np.asarray(values, dtype=np.float64))
    if len(v) < 2:
        return np.zeros(0)
    mid = (v[:-1] + v[1:]) / 2.0
    # guard against midpoints rounding onto the upper value
    return np.where(mid < v[1:], mid, v[:-1])


def gini(c0, c1):
    n = c0 + c1
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


def _weighted_impurity(c0, c1):
    """n * gini for a child with class counts (c0, c1)."""
    n = c0 + c1
    return n - (c0 * c0 + c1 * c1) / n


def _best_split(X, y, pair_lo_hi, min_leaf, eta):
    """Return (feature, threshold, SplitScore) maximizing the combined score,
    or None when no split leaves ``min_leaf`` rows on both sides."""
    n = len(y)
    c1 = float(y.sum())
    c0 = n - c1
    parent = gini(c0, c1)
    n_pairs = pair_lo_hi[0].shape[0]
    best = None
    for f in range(X.shape[1]):
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cut = np.flatnonzero(xs[1:] != xs[:-1])
        if len(cut) == 0:
            continue
        n_left = (cut + 1).astype(np.float64)
        legal = (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not legal.any():
            continue
        cut, n_left = cut[legal], n_left[legal]
        lower, upper = xs[cut], xs[cut + 1]
        thresholds = (lower + upper) / 2.0
        thresholds = np.where(thresholds < upper, thresholds, lower)
        pos_left = np.cumsum(y[order])[cut]
        neg_left = n_left - pos_left
        pos_right = c1 - pos_left
        neg_right = c0 - neg_left
        child = _weighted_impurity(neg_left, pos_left) + _weighted_impurity(neg_right, pos_right)
        gain = parent - child / n
        if n_pairs:
            lo = np.sort(pair_lo_hi[0][:, f])
            hi = np.sort(pair_lo_hi[1][:, f])
            broken = np.searchsorted(lo, thresholds, side="right") - np.searchsorted(hi, thresholds, side="right")
            intact = 1.0 - broken / n_pairs
        else:
            intact = np.ones(len(thresholds))
        combined = gain + eta * intact
        k = int(np.argmax(combined))
        if best is None or combined[k] > best[2].combined:
            best = (f, float(thresholds[k]), SplitScore(float(gain[k]), float(intact[k]), float(combined[k]), n_pairs))
    return best


def _grow(X, y, pairs: PairSet, cfg: TreeConfig) -> list[Node]:
    nodes: list[Node] = []
    # stack of (row indices, active pair ids, depth, slot in parent)
    stack = [(np.arange(len(y)), np.arange(pairs.M), 0, None)]
    while stack:
        rows, active, depth, link = stack.pop()
        yr = y[rows]
        c1 = int(yr.sum())
        node = Node(depth, (len(rows) - c1, c1), len(active))
        k = len(nodes)
        nodes.append(node)
        if link is not None:
            parent, side = link
            setattr(nodes[parent], side, k)
        if depth >= cfg.max_depth or c1 == 0 or c1 == len(rows) or len(rows) < 2 * cfg.min_leaf:
            continue
        Xr = X[rows]
        a = X[pairs.i[active]]
        b = X[pairs.j[active]]
        best = _best_split(Xr, yr, (np.minimum(a, b), np.maximum(a, b)), cfg.min_leaf, cfg.eta)
        if best is None:
            continue
        f, t, score = best
        node.feature, node.threshold, node.score = f, t, score
        go_left = Xr[:, f] <= t
        pa = X[pairs.i[active], f] <= t
        pb = X[pairs.j[active], f] <= t
        # right child pushed first so the left subtree is numbered first (preorder)
        stack.append((rows[~go_left], active[~pa & ~pb], depth + 1, (k, "right")))
        stack.append((rows[go_left], active[pa & pb], depth + 1, (k, "left")))
    return nodes


def train_tree(train, pairs: PairSet | None, cfg: TreeConfig) -> DecisionTree:
    """Greedy tree growth on an EncodedDataset; ``pairs`` index its rows."""
    X = check_matrix(train)
    y = check_labels(train.labels, X.shape[0])
    pairs = check_pairs(pairs, X.shape[0])
    names = feature_names_of(train) or [f"x{k}" for k in range(X.shape[1])]
    return DecisionTree(_grow(X, y, pairs, cfg), X.shape[1], names, cfg)


def predict_tree(tree: DecisionTree, X) -> Predictions:
    leaves = tree.apply(X)
    prob = np.array([n.probability if n.is_leaf else np.nan for n in tree.nodes])
    label = np.array([n.label if n.is_leaf else 0 for n in tree.nodes], dtype=np.int8)
    return Predictions(prob[leaves], label[leaves], 0.5)


class PairedConsistencyTreeClassifier(ClassifierMixin, BaseEstimator):
    """Binary CART tree with split score ``gini_gain + eta * intact_fraction``.

    ``intact_fraction`` is the share of consistency pairs reaching a node
    whose two members go to the same child. Pairs split apart at a node are
    dropped from the count below it.
    """

    def __init__(self, eta=0.0, max_depth=5, min_leaf=5, seed=0):
        self.eta = eta
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y=None, pairs=None):
        names = feature_names_of(X)
        if y is None and hasattr(X, "labels"):
            y = X.labels
        X = check_matrix(X)
        y = check_labels(y, X.shape[0])
        if len(y) == 0:
            raise ValueError("empty training set")
        pairs = check_pairs(pairs, X.shape[0])
        cfg = TreeConfig(self.eta, self.max_depth, self.min_leaf, self.seed)
        names = names or [f"x{k}" for k in range(X.shape[1])]
        self.tree_ = DecisionTree(_grow(X, y, pairs, cfg), X.shape[1], names, cfg)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        p = predict_tree(self.tree_, X).scores
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return predict_tree(self.tree_, X).labels_hat
