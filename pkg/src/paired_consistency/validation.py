"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np

from .pairs import PairSet


def check_matrix(X, n_features=None, name="X") -> np.ndarray:
    if hasattr(X, "matrix"):
        X = X.matrix
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} has {X.shape[1]} features, model expects {n_features}")
    return X


def check_labels(y, n) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if len(y) != n:
        raise ValueError(f"y has {len(y)} entries for {n} rows")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary 0/1")
    return y.astype(np.float64)


def check_pairs(pairs, n) -> PairSet:
    """Accept a PairSet, an (M, 2) index array or an (M, 3) array with weights."""
    if pairs is None:
        return PairSet.empty()
    if not isinstance(pairs, PairSet):
        arr = np.asarray(pairs, dtype=np.float64)
        if arr.size == 0:
            return PairSet.empty()
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ValueError("pairs must be a PairSet or an (M, 2|3) array")
        weights = arr[:, 2] if arr.shape[1] == 3 else None
        pairs = PairSet(arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), weights, provenance="array")
    pairs.validate(n)
    return pairs


def feature_names_of(X):
    return list(X.feature_names) if hasattr(X, "feature_names") else None
