"""Small builders shared by the unit tests."""

import numpy as np

from paired_consistency.data import Column, Dataset, EncodedDataset, FeatureSchema


def make_dataset(columns, labels, kinds, roles=None):
    """Dataset from plain lists; ``kinds`` maps column -> categorical|numeric."""
    roles = roles or {}
    names = list(columns)
    schema_cols = [Column(n, kinds[n], roles.get(n, "feature")) for n in names]
    schema_cols.append(Column("y", "categorical", "target"))
    schema = FeatureSchema(schema_cols, "1")
    data, vocab = {}, {}
    for n in names:
        if kinds[n] == "numeric":
            data[n] = np.asarray(columns[n], dtype=np.float64)
        else:
            data[n] = np.asarray(columns[n], dtype=object)
            vocab[n] = sorted({v for v in columns[n] if v is not None})
    data["y"] = np.asarray([str(v) for v in labels], dtype=object)
    vocab["y"] = sorted(set(data["y"]))
    return Dataset(schema, data, np.asarray(labels, dtype=np.int8), vocab)


def make_encoded(X, y, names=None):
    X = np.asarray(X, dtype=np.float64)
    names = names or [f"x{k}" for k in range(X.shape[1])]
    return EncodedDataset(names, X, np.asarray(y, dtype=np.int8), np.arange(len(X)), [(n, None) for n in names])
