"""Tabular ingestion, dummy encoding and pair-preserving splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, read_config, split_list

KINDS = ("categorical", "numeric")
ROLES = ("feature", "protected", "target", "ignored")


class DataError(ValueError):
    """Raised for malformed input data (header mismatch, bad cells, no rows)."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    role: str


@dataclass
class FeatureSchema:
    columns: list[Column]
    target_positive_value: str
    missing_values: tuple[str, ...] = ("", "?")

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigError("column names must be unique")
        for c in self.columns:
            if c.kind not in KINDS:
                raise ConfigError(f"column {c.name!r}: unknown kind {c.kind!r}")
            if c.role not in ROLES:
                raise ConfigError(f"column {c.name!r}: unknown role {c.role!r}")
        targets = [c for c in self.columns if c.role == "target"]
        if len(targets) != 1:
            raise ConfigError(f"exactly one target column required, found {len(targets)}")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def target(self) -> Column:
        return next(c for c in self.columns if c.role == "target")

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def model_columns(self, include_protected=True) -> list[Column]:
        roles = ("feature", "protected") if include_protected else ("feature",)
        return [c for c in self.columns if c.role in roles]

    @classmethod
    def from_config(cls, parser) -> "FeatureSchema":
        if not parser.has_section("columns"):
            raise ConfigError("schema config needs a [columns] section")
        columns = []
        for name, spec in parser.items("columns"):
            parts = spec.replace(",", " ").split()
            if len(parts) != 2:
                raise ConfigError(f"column {name!r}: expected '<kind> <role>', got {spec!r}")
            columns.append(Column(name, parts[0], parts[1]))
        section = parser["schema"] if parser.has_section("schema") else {}
        positive = section.get("target_positive_value")
        if positive is None:
            raise ConfigError("[schema] target_positive_value is required")
        missing = section.get("missing_values")
        missing = ("",) + tuple(split_list(missing)) if missing is not None else ("", "?")
        return cls(columns, positive.strip(), missing)

    @classmethod
    def from_file(cls, path) -> "FeatureSchema":
        return cls.from_config(read_config(path))


@dataclass
class LoadDiagnostics:
    rows_read: int
    dropped: int
    dropped_lines: list[int] = field(default_factory=list)

    def to_dict(self):
        return {"rows_read": self.rows_read, "dropped": self.dropped, "dropped_lines": self.dropped_lines}


@dataclass
class Dataset:
    """Raw typed rows stored column-wise.

    Categorical columns are object arrays of str (None when missing in an
    ignored column); numeric columns are float arrays (NaN when missing in
    an ignored column).
    """

    schema: FeatureSchema
    columns: dict[str, np.ndarray]
    labels: np.ndarray
    vocabulary: dict[str, list[str]]
    diagnostics: LoadDiagnostics | None = None

    def __post_init__(self):
        if len(self.labels) == 0:
            raise DataError("dataset has zero rows")
        for col in self.schema.columns:
            values = self.columns[col.name]
            if len(values) != len(self.labels):
                raise DataError(f"column {col.name!r} length mismatch")
            if col.role == "ignored":
                continue
            if col.kind == "numeric":
                if not np.all(np.isfinite(values)):
                    raise DataError(f"column {col.name!r} has non-finite values")
            else:
                vocab = set(self.vocabulary[col.name])
                if any(v not in vocab for v in values):
                    raise DataError(f"column {col.name!r} has values outside its vocabulary")

    def __len__(self):
        return len(self.labels)

    @property
    def n(self) -> int:
        return len(self.labels)

    def row(self, i: int) -> dict:
        return {name: _plain(values[i]) for name, values in self.columns.items()}

    @property
    def rows(self) -> list[dict]:
        return [self.row(i) for i in range(self.n)]

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.schema,
            {k: v[indices] for k, v in self.columns.items()},
            self.labels[indices],
            self.vocabulary,
            None,
        )


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    return value


def load_csv(path, schema: FeatureSchema) -> Dataset:
    """Read an RFC-4180 CSV whose header matches the schema column names.

    Rows with a missing cell in a feature, protected or target column are
    dropped and counted in ``dataset.diagnostics``.
    """
    path = Path(path)
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    missing = set(schema.missing_values)
    required = {c.name for c in schema.columns if c.role != "ignored"}
    raw = {c.name: [] for c in schema.columns}
    dropped_lines = []
    rows_read = 0
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header != schema.names:
            raise DataError(f"{path}: header mismatch, expected {schema.names}, got {header}")
        for record in reader:
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            rows_read += 1
            line = reader.line_num
            if len(record) != len(header):
                raise DataError(f"{path}: row {line} has {len(record)} cells, expected {len(header)}", row=line)
            cells = [c.strip() for c in record]
            if any(cells[k] in missing for k, c in enumerate(schema.columns) if c.name in required):
                dropped_lines.append(line)
                continue
            for k, col in enumerate(schema.columns):
                cell = cells[k]
                if col.kind == "numeric":
                    if cell in missing:
                        raw[col.name].append(math.nan)
                        continue
                    try:
                        value = float(cell)
                    except ValueError:
                        raise DataError(f"{path}: row {line}, column {col.name!r}: unparseable numeric {cell!r}", row=line) from None
                    if not math.isfinite(value):
                        raise DataError(f"{path}: row {line}, column {col.name!r}: non-finite numeric {cell!r}", row=line)
                    raw[col.name].append(value)
                else:
                    raw[col.name].append(None if cell in missing else cell)
    n = rows_read - len(dropped_lines)
    if n == 0:
        raise DataError(f"{path}: zero usable rows")

    columns, vocabulary = {}, {}
    for col in schema.columns:
        if col.kind == "numeric":
            columns[col.name] = np.asarray(raw[col.name], dtype=np.float64)
        else:
            columns[col.name] = np.asarray(raw[col.name], dtype=object)
            vocabulary[col.name] = sorted({v for v in raw[col.name] if v is not None})
    target = columns[schema.target.name]
    if schema.target.kind == "numeric":
        labels = (target == float(schema.target_positive_value)).astype(np.int8)
    else:
        labels = (target == schema.target_positive_value).astype(np.int8)
    diagnostics = LoadDiagnostics(rows_read, len(dropped_lines), dropped_lines)
    return Dataset(schema, columns, labels, vocabulary, diagnostics)


@dataclass
class EncodedDataset:
    feature_names: list[str]
    matrix: np.ndarray
    labels: np.ndarray
    row_origin: np.ndarray
    # feature name -> (source column, category or None for numerics)
    sources: list[tuple[str, str | None]] = field(default_factory=list)

    def __len__(self):
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def take(self, indices) -> "EncodedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(
            list(self.feature_names),
            self.matrix[indices],
            self.labels[indices],
            self.row_origin[indices],
            list(self.sources),
        )

    def column_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown feature {name!r}") from None

    def decode_row(self, index: int) -> dict:
        """Map one encoded row back to raw source-column values."""
        out = {}
        x = self.matrix[index]
        for k, (source, category) in enumerate(self.sources):
            if category is None:
                out[source] = float(x[k])
            elif x[k] == 1.0:
                out[source] = category
        return out


def encode(dataset: Dataset, include_protected: bool = True) -> EncodedDataset:
    """One-hot expand categorical model columns; numerics pass through.

    Column order is schema order, and within a categorical block the
    lexicographic vocabulary order. No reference category is dropped.
    """
    blocks, names, sources = [], [], []
    for col in dataset.schema.model_columns(include_protected):
        values = dataset.columns[col.name]
        if col.kind == "numeric":
            blocks.append(values.astype(np.float64)[:, None])
            names.append(col.name)
            sources.append((col.name, None))
            continue
        vocab = dataset.vocabulary[col.name]
        lookup = {v: k for k, v in enumerate(vocab)}
        codes = np.fromiter((lookup[v] for v in values), dtype=np.int64, count=len(values))
        block = np.zeros((len(values), len(vocab)))
        block[np.arange(len(values)), codes] = 1.0
        blocks.append(block)
        names.extend(f"{col.name}={v}" for v in vocab)
        sources.extend((col.name, v) for v in vocab)
    matrix = np.hstack(blocks) if blocks else np.zeros((dataset.n, 0))
    return EncodedDataset(names, matrix, dataset.labels.astype(np.int8).copy(), np.arange(dataset.n), sources)


def write_encoded_csv(encoded: EncodedDataset, path) -> None:
    """Columns: row_origin, every feature in order, then label."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row_origin", *encoded.feature_names, "label"])
        for origin, x, y in zip(encoded.row_origin, encoded.matrix, encoded.labels):
            writer.writerow([int(origin), *(repr(float(v)) if v % 1 else int(v) for v in x), int(y)])


def read_encoded_csv(path) -> EncodedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[0] != "row_origin" or header[-1] != "label":
            raise DataError(f"{path}: not an encoded dataset file")
        body = np.asarray([[float(v) for v in r] for r in reader if r], dtype=np.float64)
    names = header[1:-1]
    sources = []
    for name in names:
        source, sep, category = name.partition("=")
        sources.append((source, category) if sep else (name, None))
    return EncodedDataset(names, body[:, 1:-1], body[:, -1].astype(np.int8), body[:, 0].astype(np.int64), sources)


@dataclass
class SplitResult:
    train: EncodedDataset
    test: EncodedDataset
    train_pairs: "PairSet"
    test_pairs: "PairSet"
    seed: int
    train_index: np.ndarray
    test_index: np.ndarray


def _components(n, pairs) -> np.ndarray:
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for i, j in zip(pairs.i, pairs.j):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.fromiter((find(a) for a in range(n)), dtype=np.int64, count=n)


def pair_aware_split(encoded: EncodedDataset, pairs, test_ratio: float, seed: int,
                     tolerance: float = 0.02) -> SplitResult:
    """Train/test split that never separates rows linked by a pair.

    Rows are grouped into connected components of the pair graph. Components
    are placed largest first (equal sizes in seeded random order); each goes
    to test with probability ``test_ratio`` while both partitions have room,
    otherwise to whichever partition still fits it.
    """
    from .pairs import PairSet

    if not 0.0 < test_ratio < 1.0:
        raise ValueError(f"test_ratio must lie in (0, 1), got {test_ratio}")
    n = len(encoded)
    pairs = pairs if pairs is not None else PairSet.empty()
    pairs.validate(n)
    rng = np.random.default_rng(seed)

    roots = _components(n, pairs)
    uniq, inverse, sizes = np.unique(roots, return_inverse=True, return_counts=True)
    shuffled = rng.permutation(len(uniq))
    order = shuffled[np.argsort(-sizes[shuffled], kind="stable")]

    test_cap = int(round(test_ratio * n))
    train_cap = n - test_cap
    draws = rng.random(len(uniq))
    in_test = np.zeros(len(uniq), dtype=bool)
    n_test = n_train = 0
    for comp in order:
        size = int(sizes[comp])
        fits_test = n_test + size <= test_cap
        fits_train = n_train + size <= train_cap
        if not fits_test and not fits_train:
            raise ValueError(
                f"pair component of size {size} fits neither partition "
                f"(test room {test_cap - n_test}, train room {train_cap - n_train})"
            )
        to_test = fits_test and (draws[comp] < test_ratio or not fits_train)
        in_test[comp] = to_test
        if to_test:
            n_test += size
        else:
            n_train += size

    row_test = in_test[inverse]
    if abs(row_test.sum() / n - test_ratio) > tolerance:
        raise ValueError(f"achieved test ratio {row_test.sum() / n:.4f} misses {test_ratio} by more than {tolerance}")
    test_index = np.flatnonzero(row_test)
    train_index = np.flatnonzero(~row_test)
    return SplitResult(
        encoded.take(train_index),
        encoded.take(test_index),
        pairs.restrict(train_index),
        pairs.restrict(test_index),
        seed,
        train_index,
        test_index,
    )


def load_schema(path) -> FeatureSchema:
    return FeatureSchema.from_file(path)
