"""Logistic regression with a paired-consistency penalty, trained by
full-batch gradient descent.

Objective over weights ``w`` and bias ``b``::

    CE(w, b) + eta / M * sum_j v_j * (p(x1_j) - p(x2_j))**2 + l2 * ||w||^2

with ``p`` the sigmoid output and ``v_j`` the pair weights.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .pairs import PairSet
from .validation import check_labels, check_matrix, check_pairs, feature_names_of


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    eta: float = 0.0
    learning_rate: float = 0.5
    epochs: int = 500
    seed: int = 0
    l2: float = 1e-6

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_names: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": "logreg",
            "feature_names": list(self.feature_names),
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "config": self.config,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_dict(cls, payload):
        return cls(np.asarray(payload["weights"], dtype=np.float64), float(payload["bias"]),
                   list(payload.get("feature_names", [])), dict(payload.get("config", {})))


@dataclass
class TrainingTrace:
    ce_loss: list[float] = field(default_factory=list)
    pair_loss: list[float] = field(default_factory=list)
    l2_loss: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    eta: float = 0.0
    final_grad_norm: float = math.nan

    def __len__(self):
        return len(self.total)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "ce_loss", "pair_loss", "total"])
            for k, row in enumerate(zip(self.ce_loss, self.pair_loss, self.total), start=1):
                writer.writerow([k, *map(repr, row)])


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# einsum without `optimize` never dispatches to BLAS, so reductions have a
# fixed order regardless of thread count.
def _rows_dot(X, w):
    return np.einsum("ij,j->i", X, w)


def _cols_dot(X, r):
    return np.einsum("ij,i->j", X, r)


def _losses(z, y, p, pairs, w, l2):
    ce = float(np.mean(np.logaddexp(0.0, z) - y * z))
    if pairs.M:
        gap = p[pairs.i] - p[pairs.j]
        pair = float(np.sum(pairs.weights * gap * gap) / pairs.M)
    else:
        pair = 0.0
    return ce, pair, float(l2 * np.dot(w, w))


def _gradient(X, y, z, p, pairs, w, eta, l2):
    n = X.shape[0]
    r = (p - y) / n
    g_w = _cols_dot(X, r)
    g_b = float(np.sum(r))
    if eta != 0.0 and pairs.M:
        p1, p2 = p[pairs.i], p[pairs.j]
        coef = (2.0 * eta / pairs.M) * pairs.weights * (p1 - p2)
        s1 = coef * p1 * (1.0 - p1)
        s2 = coef * p2 * (1.0 - p2)
        # scatter pair coefficients onto rows, then one pass over X
        row_coef = np.zeros(n)
        np.add.at(row_coef, pairs.i, s1)
        np.add.at(row_coef, pairs.j, -s2)
        g_w = g_w + _cols_dot(X, row_coef)
        g_b += float(np.sum(s1 - s2))
    if l2 != 0.0:
        g_w = g_w + 2.0 * l2 * w
    return g_w, g_b


def loss(model: LogisticModel, X, y, pairs: PairSet, cfg: TrainConfig) -> float:
    X = check_matrix(X, len(model.weights))
    y = check_labels(y, X.shape[0])
    z = _rows_dot(X, model.weights) + model.bias
    ce, pair, reg = _losses(z, y, sigmoid(z), pairs, model.weights, cfg.l2)
    return ce + cfg.eta * pair + reg


def gradient(model: LogisticModel, train, pairs: PairSet, cfg: TrainConfig, y=None) -> np.ndarray:
    """Analytic gradient of the full objective; weights first, bias last."""
    X = check_matrix(train, len(model.weights))
    y = check_labels(train.labels if y is None else y, X.shape[0])
    pairs = check_pairs(pairs, X.shape[0])
    z = _rows_dot(X, model.weights) + model.bias
    g_w, g_b = _gradient(X, y, z, sigmoid(z), pairs, model.weights, cfg.eta, cfg.l2)
    return np.append(g_w, g_b)


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    X = check_matrix(X, len(model.weights))
    return sigmoid(_rows_dot(X, model.weights) + model.bias)


def _fit(X, y, pairs, cfg: TrainConfig, precondition=True):
    n, f = X.shape
    if cfg.eta > 0 and pairs.M == 0:
        raise TrainingError("eta > 0 needs a non-empty pair set")
    # Descent runs on standardized coordinates (a fixed diagonal
    # preconditioner); the objective and returned weights stay in raw units.
    if precondition:
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
    else:
        mean, scale = np.zeros(f), np.ones(f)
    u = np.zeros(f)
    c = 0.0
    trace = TrainingTrace(eta=cfg.eta)

    def raw(u, c):
        w = u / scale
        return w, c - float(np.dot(w, mean))

    w, b = raw(u, c)
    z = _rows_dot(X, w) + b
    p = sigmoid(z)
    for epoch in range(1, cfg.epochs + 1):
        g_w, g_b = _gradient(X, y, z, p, pairs, w, cfg.eta, cfg.l2)
        u = u - cfg.learning_rate * (g_w / scale - g_b * mean / scale)
        c = c - cfg.learning_rate * g_b
        w, b = raw(u, c)
        z = _rows_dot(X, w) + b
        p = sigmoid(z)
        ce, pair, reg = _losses(z, y, p, pairs, w, cfg.l2)
        total = ce + cfg.eta * pair + reg
        if not math.isfinite(total):
            raise TrainingError(f"loss became non-finite at epoch {epoch}")
        trace.ce_loss.append(ce)
        trace.pair_loss.append(pair)
        trace.l2_loss.append(reg)
        trace.total.append(total)
    g_w, g_b = _gradient(X, y, z, p, pairs, w, cfg.eta, cfg.l2)
    trace.final_grad_norm = float(math.sqrt(np.dot(g_w, g_w) + g_b * g_b))
    return w, b, trace


def train_logreg(train, pairs: PairSet | None, cfg: TrainConfig) -> tuple[LogisticModel, TrainingTrace]:
    """Fit on an EncodedDataset; ``pairs`` index rows of ``train``."""
    X = check_matrix(train)
    y = check_labels(train.labels, X.shape[0])
    pairs = check_pairs(pairs, X.shape[0])
    w, b, trace = _fit(X, y, pairs, cfg)
    names = feature_names_of(train) or [f"x{k}" for k in range(X.shape[1])]
    return LogisticModel(w, b, names, asdict(cfg)), trace


class PairedConsistencyLogisticRegression(ClassifierMixin, BaseEstimator):
    """Binary logistic regression regularized toward equal outputs on pairs.

    Parameters
    ----------
    eta : float
        Weight of the mean squared probability gap over consistency pairs.
    learning_rate, epochs : fixed-step full-batch descent schedule.
    l2 : float
        Ridge penalty on the weights (bias excluded).
    threshold : float
        Probability at or above which ``predict`` returns 1.
    """

    def __init__(self, eta=0.0, learning_rate=0.5, epochs=500, l2=1e-6, threshold=0.5,
                 precondition=True, seed=0):
        self.eta = eta
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2 = l2
        self.threshold = threshold
        self.precondition = precondition
        self.seed = seed

    def _config(self):
        return TrainConfig(self.eta, self.learning_rate, self.epochs, self.seed, self.l2)

    def fit(self, X, y=None, pairs=None):
        """``pairs`` indexes rows of ``X``: a PairSet or an (M, 2|3) array."""
        names = feature_names_of(X)
        if y is None and hasattr(X, "labels"):
            y = X.labels
        X = check_matrix(X)
        y = check_labels(y, X.shape[0])
        pairs = check_pairs(pairs, X.shape[0])
        w, b, trace = _fit(X, y, pairs, self._config(), self.precondition)
        self.coef_ = w
        self.intercept_ = b
        self.trace_ = trace
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.feature_names_ = names or [f"x{k}" for k in range(X.shape[1])]
        return self

    @property
    def model_(self) -> LogisticModel:
        return LogisticModel(self.coef_, self.intercept_, self.feature_names_, asdict(self._config()))

    def decision_function(self, X):
        X = check_matrix(X, self.n_features_in_)
        return _rows_dot(X, self.coef_) + self.intercept_

    def predict_proba(self, X):
        p = sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= self.threshold).astype(np.int8)
