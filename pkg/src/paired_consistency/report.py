"""Evaluation reports, eta / pair-count sweeps and trade-off tables."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import platform
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .importance import permutation_importance
from .logreg import LogisticModel, PairedConsistencyLogisticRegression, predict_proba
from .metrics import (
    FairnessReport,
    MetricError,
    Predictions,
    accuracy,
    average_odds_difference,
    disparate_impact,
    equal_opportunity_difference,
    knn_consistency,
    paired_consistency_cls,
    paired_consistency_reg,
    prc_score,
    precision_recall,
    prejudice_index,
    statistical_parity_difference,
)
from .pairs import PairSet, subsample_pairs
from .tree import DecisionTree, PairedConsistencyTreeClassifier, predict_tree

MODEL_KINDS = ("logreg", "tree")


def group_assignment(encoded, column: str, threshold: float) -> np.ndarray:
    """Binarize a numeric protected column: ``value >= threshold`` is privileged (1)."""
    values = encoded.matrix[:, encoded.column_index(column)]
    return (values >= threshold).astype(np.int8)


def predictions_of(model, X, threshold: float = 0.5) -> Predictions:
    """Scores and thresholded labels from any supported model handle."""
    if isinstance(model, DecisionTree):
        return predict_tree(model, X)
    if isinstance(model, LogisticModel):
        return Predictions.from_scores(predict_proba(model, X), threshold)
    if hasattr(model, "predict_proba"):
        scores = np.asarray(model.predict_proba(X))
        scores = scores[:, 1] if scores.ndim == 2 else scores
        return Predictions.from_scores(np.clip(scores, 0.0, 1.0), threshold)
    labels = np.asarray(model.predict(X))
    return Predictions.from_labels(labels)


class _Labeler:
    """Adapter giving a model handle a ``predict`` for permutation importance."""

    def __init__(self, model, n_features, threshold):
        self.model = model
        self.n_features_in_ = n_features
        self.threshold = threshold

    def predict(self, X):
        return predictions_of(self.model, X, self.threshold).labels_hat


def evaluate(model, test, test_pairs: PairSet | None, groups, truth=None, k: int = 5,
             threshold: float = 0.5, prc_weights=(1.0, 1.0, 1.0)) -> FairnessReport:
    """Every metric for one model on one test partition.

    A metric that is undefined for these inputs is left as ``None`` and its
    cause recorded in ``report.undefined``.
    """
    X = test.matrix if hasattr(test, "matrix") else np.asarray(test)
    if truth is None:
        truth = test.labels
    preds = predictions_of(model, X, threshold)
    undefined: dict[str, str] = {}

    def attempt(name, fn, *args):
        try:
            return fn(*args)
        except (MetricError, ValueError) as exc:
            undefined[name] = str(exc)
            return None

    acc = accuracy(preds, truth)
    precision, recall = precision_recall(preds, truth)
    n_pairs = 0 if test_pairs is None else test_pairs.M
    if n_pairs:
        pc = attempt("paired_consistency", paired_consistency_cls, preds, test_pairs)
    else:
        pc = None
        undefined["paired_consistency"] = "no test pairs"
    prc, flagged = None, False
    if pc is not None:
        prc = prc_score(precision, recall, pc, prc_weights)
        flagged = min(precision, recall, pc) == 0
    else:
        undefined["prc"] = "paired consistency undefined"
    report = FairnessReport(
        accuracy=acc,
        precision=precision,
        recall=recall,
        paired_consistency=pc,
        prc=prc,
        statistical_parity_difference=attempt("statistical_parity_difference", statistical_parity_difference, preds, groups),
        disparate_impact=attempt("disparate_impact", disparate_impact, preds, groups),
        average_odds_difference=attempt("average_odds_difference", average_odds_difference, preds, truth, groups),
        equal_opportunity_difference=attempt("equal_opportunity_difference", equal_opportunity_difference, preds, truth, groups),
        knn_consistency=attempt("knn_consistency", knn_consistency, preds, X, k),
        prejudice_index=attempt("prejudice_index", prejudice_index, preds, groups),
        n_rows=len(preds),
        n_pairs=n_pairs,
        k=k,
        threshold=threshold,
        undefined=undefined,
        prc_flagged=flagged,
    )
    return report


def make_estimator(kind: str, eta: float, params: dict | None = None):
    params = dict(params or {})
    if kind == "logreg":
        return PairedConsistencyLogisticRegression(eta=eta, **params)
    if kind == "tree":
        return PairedConsistencyTreeClassifier(eta=eta, **params)
    raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")


def model_handle(estimator):
    if isinstance(estimator, PairedConsistencyTreeClassifier):
        return estimator.tree_
    return estimator.model_


SWEEP_COLUMNS = (
    "accuracy",
    "paired_consistency",
    "paired_consistency_reg",
    "pct_pairs_intact",
    "protected_importance",
    "protected_rank",
    "statistical_parity_difference",
    "average_odds_difference",
    "disparate_impact",
    "equal_opportunity_difference",
    "train_pairs",
)


@dataclass
class SweepResult:
    parameter: str
    grid: list
    rows: list[dict]
    metadata: dict = field(default_factory=dict)
    models: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([self.parameter, *SWEEP_COLUMNS])
            for value, row in zip(self.grid, self.rows):
                writer.writerow([_fmt(value), *(_fmt(row[c]) for c in SWEEP_COLUMNS)])


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


@dataclass
class SweepSetup:
    """Everything a sweep point needs besides its own eta and pair set."""

    train: object
    test: object
    train_pairs: PairSet
    test_pairs: PairSet
    protected: str = "age"
    group_threshold: float = 37.0
    model_params: dict = field(default_factory=dict)
    importance_repeats: int = 5
    seed: int = 0
    threshold: float = 0.5
    with_importance: bool = True


def _run_point(setup: SweepSetup, kind: str, eta: float, pairs: PairSet):
    est = make_estimator(kind, eta, setup.model_params)
    est.fit(setup.train.matrix, setup.train.labels, pairs=pairs)
    handle = model_handle(est)
    X = setup.test.matrix
    preds = predictions_of(handle, X, setup.threshold)
    groups = group_assignment(setup.test, setup.protected, setup.group_threshold)
    truth = setup.test.labels

    def maybe(fn, *args):
        try:
            return fn(*args)
        except (MetricError, ValueError):
            return None

    pc = maybe(paired_consistency_cls, preds, setup.test_pairs) if setup.test_pairs.M else None
    row = {
        "accuracy": accuracy(preds, truth),
        "paired_consistency": pc,
        "paired_consistency_reg": maybe(paired_consistency_reg, preds, setup.test_pairs) if setup.test_pairs.M else None,
        "pct_pairs_intact": None if pc is None else 100.0 * pc,
        "protected_importance": None,
        "protected_rank": None,
        "statistical_parity_difference": maybe(statistical_parity_difference, preds, groups),
        "average_odds_difference": maybe(average_odds_difference, preds, truth, groups),
        "disparate_impact": maybe(disparate_impact, preds, groups),
        "equal_opportunity_difference": maybe(equal_opportunity_difference, preds, truth, groups),
        "train_pairs": pairs.M,
    }
    if setup.with_importance:
        imp = permutation_importance(_Labeler(handle, X.shape[1], setup.threshold), setup.test,
                                     setup.importance_repeats, setup.seed)
        entry = next(e for e in imp.entries if e.feature == setup.protected)
        row["protected_importance"] = entry.mean_drop
        row["protected_rank"] = entry.rank
    return row, handle, getattr(est, "trace_", None)


def sweep_eta(setup: SweepSetup, kind: str, grid) -> SweepResult:
    """Train and evaluate one model per eta on the full training pair set."""
    grid = [float(v) for v in grid]
    if not grid:
        raise ValueError("eta grid is empty")
    result = SweepResult("eta", grid, [], {"kind": kind, "grid": grid, "model_params": setup.model_params})
    for eta in grid:
        row, handle, trace = _run_point(setup, kind, eta, setup.train_pairs)
        result.rows.append(row)
        result.models.append(handle)
        result.traces.append(trace)
    return result


def sweep_pair_count(setup: SweepSetup, kind: str, counts, eta: float, seed: int | None = None) -> SweepResult:
    """Subsample the training pairs to each count, then train and evaluate.

    A count of ``None`` means all training pairs.
    """
    seed = setup.seed if seed is None else seed
    total = setup.train_pairs.M
    resolved = [total if c is None else int(c) for c in counts]
    if not resolved:
        raise ValueError("pair-count grid is empty")
    result = SweepResult("n_pairs", resolved, [],
                         {"kind": kind, "eta": eta, "counts": resolved, "seed": seed, "model_params": setup.model_params})
    for count in resolved:
        pairs = subsample_pairs(setup.train_pairs, count, seed)
        row, handle, trace = _run_point(setup, kind, eta, pairs)
        result.rows.append(row)
        result.models.append(handle)
        result.traces.append(trace)
    return result


def tradeoff_rows(result: SweepResult) -> list[dict]:
    """Final CE and pair-loss per eta, also as fractions of the eta=0 values."""
    if result.metadata.get("kind") != "logreg":
        raise ValueError("trade-off table needs a logistic-regression eta sweep")
    base = None
    for eta, trace in zip(result.grid, result.traces):
        if eta == 0.0:
            base = trace
    rows = []
    for eta, trace in zip(result.grid, result.traces):
        ce, pair = trace.ce_loss[-1], trace.pair_loss[-1]
        rows.append({
            "eta": eta,
            "ce_loss": ce,
            "pair_loss": pair,
            "ce_relative": None if base is None else ce / base.ce_loss[-1],
            "pair_relative": None if base is None or base.pair_loss[-1] == 0 else pair / base.pair_loss[-1],
            "final_grad_norm": trace.final_grad_norm,
        })
    return rows


def write_tradeoff_csv(rows, path):
    cols = ("eta", "ce_loss", "pair_loss", "ce_relative", "pair_relative", "final_grad_norm")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


def eta_label(eta: float) -> str:
    return repr(float(eta))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, command: str, config: dict, outputs) -> Path:
    """Write ``report.json`` last and atomically; it marks a completed run."""
    out_dir = Path(out_dir)
    payload = {
        "command": command,
        "config": config,
        "outputs": {Path(p).name: file_digest(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
        "versions": {
            "paired_consistency": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    target = out_dir / "report.json"
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".report.", suffix=".tmp")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, target)
    return target


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"not serializable: {type(value).__name__}")
