"""Paired consistency, the PRC score and the group/individual fairness suite.

Group coding: ``d == 1`` is the privileged group, ``d == 0`` unprivileged.
Every difference/ratio is unprivileged relative to privileged.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    """A metric is undefined for the given inputs (empty group, zero rate...)."""


@dataclass
class Predictions:
    scores: np.ndarray
    labels_hat: np.ndarray
    threshold: float = 0.5

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels_hat = np.asarray(self.labels_hat, dtype=np.int8)
        if self.scores.shape != self.labels_hat.shape:
            raise ValueError("scores and labels differ in shape")
        if not np.all(np.isfinite(self.scores)) or np.any((self.scores < 0) | (self.scores > 1)):
            raise ValueError("scores must be finite and lie in [0, 1]")

    @classmethod
    def from_scores(cls, scores, threshold=0.5) -> "Predictions":
        scores = np.asarray(scores, dtype=np.float64)
        return cls(scores, (scores >= threshold).astype(np.int8), threshold)

    @classmethod
    def from_labels(cls, labels) -> "Predictions":
        labels = np.asarray(labels, dtype=np.int8)
        return cls(labels.astype(np.float64), labels, 0.5)

    def __len__(self):
        return len(self.scores)


def _labels(preds) -> np.ndarray:
    if isinstance(preds, Predictions):
        return preds.labels_hat
    return np.asarray(preds, dtype=np.int8)


def _scores(preds) -> np.ndarray:
    if isinstance(preds, Predictions):
        return preds.scores
    return np.asarray(preds, dtype=np.float64)


def _groups(groups, n) -> np.ndarray:
    d = np.asarray(groups).astype(np.int8).reshape(-1)
    if len(d) != n:
        raise ValueError(f"group vector has {len(d)} entries for {n} predictions")
    if not np.all((d == 0) | (d == 1)):
        raise ValueError("group coding must be 0/1")
    return d


def _check_pairs(pairs, n):
    if pairs.M == 0:
        raise MetricError("paired consistency needs at least one pair")
    pairs.validate(n)


def paired_consistency_cls(preds, pairs) -> float:
    """Fraction of pairs whose members receive the same predicted label."""
    y = _labels(preds)
    _check_pairs(pairs, len(y))
    return float(np.mean(y[pairs.i] == y[pairs.j]))


def paired_consistency_reg(preds, pairs, delta_max: float = 1.0) -> float:
    """One minus the mean squared score gap over pairs, scaled by ``delta_max``."""
    if not delta_max > 0:
        raise ValueError("delta_max must be positive")
    s = _scores(preds)
    _check_pairs(pairs, len(s))
    gaps = (s[pairs.i] - s[pairs.j]) ** 2
    if np.any(gaps > delta_max):
        raise MetricError(f"squared gap {gaps.max():g} exceeds delta_max={delta_max:g}")
    return float(1.0 - gaps.sum() / (pairs.M * delta_max))


def paired_consistency_weighted(preds, pairs) -> float:
    """Weight-normalized agreement: sum(w * agree) / sum(w)."""
    y = _labels(preds)
    _check_pairs(pairs, len(y))
    w = pairs.weights
    return float(np.sum(w * (y[pairs.i] == y[pairs.j])) / np.sum(w))


def prc_score(precision: float, recall: float, paired_consistency: float, weights=(1.0, 1.0, 1.0)) -> float:
    """Weighted harmonic mean of precision, recall and paired consistency.

    Any zero input gives 0, the limit of the harmonic mean.
    """
    values = np.asarray([precision, recall, paired_consistency], dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (3,) or np.any(w <= 0):
        raise ValueError("prc_score needs three positive weights")
    if np.any(values < 0) or np.any(values > 1):
        raise ValueError("prc_score inputs must lie in [0, 1]")
    if np.any(values == 0):
        return 0.0
    return float(w.sum() / np.sum(w / values))


def _rate(mask, values) -> float:
    if not mask.any():
        raise MetricError("empty group")
    return float(values[mask].mean())


def group_positive_rates(preds, groups) -> tuple[float, float]:
    y = _labels(preds)
    d = _groups(groups, len(y))
    return _rate(d == 0, y), _rate(d == 1, y)


def statistical_parity_difference(preds, groups) -> float:
    unpriv, priv = group_positive_rates(preds, groups)
    return unpriv - priv


def disparate_impact(preds, groups) -> float:
    unpriv, priv = group_positive_rates(preds, groups)
    if priv == 0:
        raise MetricError("disparate impact undefined: privileged positive rate is 0")
    return unpriv / priv


def _group_rates(preds, truth, groups):
    y = _labels(preds)
    t = np.asarray(truth).astype(np.int8)
    d = _groups(groups, len(y))
    out = {}
    for g in (0, 1):
        pos = (d == g) & (t == 1)
        neg = (d == g) & (t == 0)
        out[g] = (
            float(y[pos].mean()) if pos.any() else None,
            float(y[neg].mean()) if neg.any() else None,
        )
    return out


def true_positive_rates(preds, truth, groups) -> tuple[float, float]:
    rates = _group_rates(preds, truth, groups)
    if rates[0][0] is None or rates[1][0] is None:
        raise MetricError("TPR undefined: a group has no positive ground truth")
    return rates[0][0], rates[1][0]


def false_positive_rates(preds, truth, groups) -> tuple[float, float]:
    rates = _group_rates(preds, truth, groups)
    if rates[0][1] is None or rates[1][1] is None:
        raise MetricError("FPR undefined: a group has no negative ground truth")
    return rates[0][1], rates[1][1]


def average_odds_difference(preds, truth, groups) -> float:
    tpr0, tpr1 = true_positive_rates(preds, truth, groups)
    fpr0, fpr1 = false_positive_rates(preds, truth, groups)
    return 0.5 * ((fpr0 - fpr1) + (tpr0 - tpr1))


def equal_opportunity_difference(preds, truth, groups) -> float:
    tpr0, tpr1 = true_positive_rates(preds, truth, groups)
    return tpr0 - tpr1


def nearest_neighbors(features, k: int, max_cells: int = 4_000_000) -> np.ndarray:
    """Indices of the k nearest rows of each row (Euclidean, self excluded).

    Exact brute force; ties at equal distance go to the lower row index.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < N={n}, got {k}")
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, max_cells // max(1, n * X.shape[1]))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        diff = X[start:stop, None, :] - X[None, :, :]
        dist = np.einsum("qnf,qnf->qn", diff, diff)
        dist[np.arange(stop - start), np.arange(start, stop)] = np.inf
        for q in range(stop - start):
            row = dist[q]
            kth = np.partition(row, k - 1)[k - 1]
            cand = np.flatnonzero(row <= kth)
            order = np.argsort(row[cand], kind="stable")
            out[start + q] = cand[order[:k]]
    return out


def knn_consistency(preds, features, k: int = 5) -> float:
    y = _labels(preds).astype(np.float64)
    nn = nearest_neighbors(features, k)
    return float(1.0 - np.mean(np.abs(y - y[nn].mean(axis=1))))


def prejudice_index(preds, groups) -> float:
    """Mutual information (nats) between predicted label and group."""
    y = _labels(preds)
    d = _groups(groups, len(y))
    n = len(y)
    mi = 0.0
    for a in (0, 1):
        pa = np.mean(y == a)
        for g in (0, 1):
            pg = np.mean(d == g)
            joint = np.sum((y == a) & (d == g)) / n
            if joint > 0:
                mi += joint * math.log(joint / (pa * pg))
    return max(mi, 0.0)


def accuracy(preds, truth) -> float:
    return float(np.mean(_labels(preds) == np.asarray(truth).astype(np.int8)))


def precision_recall(preds, truth) -> tuple[float, float]:
    y = _labels(preds)
    t = np.asarray(truth).astype(np.int8)
    tp = float(np.sum((y == 1) & (t == 1)))
    predicted = float(np.sum(y == 1))
    actual = float(np.sum(t == 1))
    precision = tp / predicted if predicted else 0.0
    recall = tp / actual if actual else 0.0
    return precision, recall


REPORT_COLUMNS = (
    "accuracy",
    "precision",
    "recall",
    "paired_consistency",
    "prc",
    "statistical_parity_difference",
    "disparate_impact",
    "average_odds_difference",
    "equal_opportunity_difference",
    "knn_consistency",
    "prejudice_index",
    "n_rows",
    "n_pairs",
    "k",
    "threshold",
    "group_coding",
)


@dataclass
class FairnessReport:
    accuracy: float
    precision: float
    recall: float
    paired_consistency: float | None
    prc: float | None
    statistical_parity_difference: float | None
    disparate_impact: float | None
    average_odds_difference: float | None
    equal_opportunity_difference: float | None
    knn_consistency: float | None
    prejudice_index: float | None
    n_rows: int
    n_pairs: int
    k: int
    threshold: float
    group_coding: str = "d=1 privileged, d=0 unprivileged"
    # metric name -> reason, for every field left as None
    undefined: dict[str, str] = field(default_factory=dict)
    prc_flagged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, allow_nan=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(REPORT_COLUMNS)
            writer.writerow(["" if getattr(self, c) is None else _fmt(getattr(self, c)) for c in REPORT_COLUMNS])


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value
