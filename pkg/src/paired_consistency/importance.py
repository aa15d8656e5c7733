"""Permutation feature importance (mean accuracy drop under column shuffles)."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .validation import check_matrix


@dataclass
class ImportanceEntry:
    feature: str
    mean_drop: float
    std: float
    rank: int


@dataclass
class ImportanceReport:
    entries: list[ImportanceEntry]
    baseline: float
    n_repeats: int
    seed: int

    def rank_of(self, feature: str) -> int:
        return rank_of(self, feature)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["feature", "mean_drop", "std", "rank"])
            for e in self.entries:
                writer.writerow([e.feature, repr(e.mean_drop), repr(e.std), e.rank])


def _predict_labels(model, X):
    if hasattr(model, "predict"):
        return np.asarray(model.predict(X)).reshape(-1)
    return np.asarray(model(X)).reshape(-1)


def permutation_importance(model, test, n_repeats: int = 5, seed: int = 0, y=None,
                           feature_names=None, scorer=None) -> ImportanceReport:
    """Shuffle one column at a time within ``test`` and record the score drop.

    ``model`` is anything with ``predict`` (or a callable) over the encoded
    feature space. Each feature draws its shuffles from its own child seed,
    so results do not depend on evaluation order.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be at least 1")
    names = feature_names or getattr(test, "feature_names", None)
    if y is None:
        y = test.labels
    X = check_matrix(test, getattr(model, "n_features_in_", None))
    y = np.asarray(y).reshape(-1)
    if names is None:
        names = [f"x{k}" for k in range(X.shape[1])]
    if len(names) != X.shape[1]:
        raise ValueError("feature names do not match the matrix width")
    if scorer is None:
        def scorer(pred, truth):
            return float(np.mean(pred == truth))

    baseline = scorer(_predict_labels(model, X), y)
    children = np.random.SeedSequence(seed).spawn(X.shape[1])
    drops = np.empty((X.shape[1], n_repeats))
    work = X.copy()
    for f in range(X.shape[1]):
        rng = np.random.default_rng(children[f])
        original = work[:, f].copy()
        for r in range(n_repeats):
            work[:, f] = original[rng.permutation(len(original))]
            drops[f, r] = baseline - scorer(_predict_labels(model, work), y)
        work[:, f] = original
    mean = drops.mean(axis=1)
    std = drops.std(axis=1)
    # descending mean drop, ties by feature order
    order = np.lexsort((np.arange(len(mean)), -mean))
    entries = [ImportanceEntry(names[f], float(mean[f]), float(std[f]), r + 1) for r, f in enumerate(order)]
    return ImportanceReport(entries, baseline, n_repeats, seed)


def rank_of(report: ImportanceReport, feature: str) -> int:
    for e in report.entries:
        if e.feature == feature:
            return e.rank
    raise KeyError(f"unknown feature {feature!r}")
