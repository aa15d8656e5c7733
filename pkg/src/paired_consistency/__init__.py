"""Paired-consistency fairness: pair mining, pair-regularized logistic
regression and decision trees, and a fairness-metric audit suite."""

__version__ = "0.1.0"

from .data import Dataset, EncodedDataset, FeatureSchema, encode, load_csv, pair_aware_split
from .importance import permutation_importance, rank_of
from .logreg import PairedConsistencyLogisticRegression, TrainConfig, train_logreg
from .metrics import FairnessReport, Predictions
from .pairs import MatchSpec, PairSet, load_pairs, mine_pairs, subsample_pairs
from .report import evaluate, sweep_eta, sweep_pair_count
from .tree import PairedConsistencyTreeClassifier, TreeConfig, train_tree

__all__ = [
    "Dataset",
    "EncodedDataset",
    "FairnessReport",
    "FeatureSchema",
    "MatchSpec",
    "PairSet",
    "PairedConsistencyLogisticRegression",
    "PairedConsistencyTreeClassifier",
    "Predictions",
    "TrainConfig",
    "TreeConfig",
    "encode",
    "evaluate",
    "load_csv",
    "load_pairs",
    "mine_pairs",
    "pair_aware_split",
    "permutation_importance",
    "rank_of",
    "subsample_pairs",
    "sweep_eta",
    "sweep_pair_count",
    "train_logreg",
    "train_tree",
]
