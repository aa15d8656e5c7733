"""Consistency pairs: mining from a dataset, file I/O and subsampling."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_bool, split_list, split_map


class PairError(ValueError):
    pass


class EmptyPairsError(PairError):
    """No pairs available. ``stats`` holds per-constraint counts when mining."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats or {}


@dataclass(frozen=True)
class ConsistencyPair:
    i: int
    j: int
    weight: float = 1.0

    def __post_init__(self):
        if self.i == self.j:
            raise PairError(f"self-pair ({self.i}, {self.j})")
        if not self.weight > 0:
            raise PairError(f"pair ({self.i}, {self.j}) has non-positive weight {self.weight}")


class PairSet:
    """Index pairs into a dataset plus per-pair expert weights.

    Stored as three parallel arrays so the trainers can gather pair rows
    without a Python loop.
    """

    def __init__(self, i, j, weights=None, provenance="external file", stats=None):
        self.i = np.asarray(i, dtype=np.int64).reshape(-1)
        self.j = np.asarray(j, dtype=np.int64).reshape(-1)
        if weights is None:
            weights = np.ones(len(self.i))
        self.weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if not (len(self.i) == len(self.j) == len(self.weights)):
            raise PairError("pair arrays differ in length")
        if np.any(self.i == self.j):
            k = int(np.flatnonzero(self.i == self.j)[0])
            raise PairError(f"self-pair at position {k}: ({self.i[k]}, {self.j[k]})")
        if np.any(~(self.weights > 0)):
            k = int(np.flatnonzero(~(self.weights > 0))[0])
            raise PairError(f"non-positive weight {self.weights[k]} at position {k}")
        self.provenance = provenance
        self.stats = stats or {}

    @classmethod
    def empty(cls):
        return cls([], [], [], provenance="empty")

    @classmethod
    def from_pairs(cls, pairs, provenance="external file"):
        pairs = list(pairs)
        return cls([p.i for p in pairs], [p.j for p in pairs], [p.weight for p in pairs], provenance)

    @property
    def M(self) -> int:
        return len(self.i)

    def __len__(self):
        return len(self.i)

    def __iter__(self):
        for a, b, w in zip(self.i, self.j, self.weights):
            yield ConsistencyPair(int(a), int(b), float(w))

    def __eq__(self, other):
        if not isinstance(other, PairSet):
            return NotImplemented
        return (np.array_equal(self.i, other.i) and np.array_equal(self.j, other.j)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self):
        return f"PairSet(M={self.M}, provenance={self.provenance!r})"

    @property
    def unit_weights(self) -> bool:
        return bool(np.all(self.weights == 1.0))

    def validate(self, n: int) -> None:
        if self.M == 0:
            return
        bad = (self.i < 0) | (self.i >= n) | (self.j < 0) | (self.j >= n)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise PairError(f"pair ({self.i[k]}, {self.j[k]}) references a row outside 0..{n - 1}")

    def restrict(self, index) -> "PairSet":
        """Keep pairs with both members in ``index`` and renumber to positions in it."""
        index = np.asarray(index, dtype=np.int64)
        if self.M == 0:
            return PairSet([], [], [], provenance=self.provenance)
        position = {int(r): k for k, r in enumerate(index)}
        keep = [k for k in range(self.M) if int(self.i[k]) in position and int(self.j[k]) in position]
        return PairSet(
            [position[int(self.i[k])] for k in keep],
            [position[int(self.j[k])] for k in keep],
            self.weights[keep],
            provenance=self.provenance,
        )

    def sorted(self) -> "PairSet":
        order = np.lexsort((self.j, self.i))
        return PairSet(self.i[order], self.j[order], self.weights[order], self.provenance, self.stats)


@dataclass
class MatchSpec:
    """Surrogate-expert matching rule.

    Every column that is neither the protected column nor ignored is
    constrained: categoricals and anything in ``exact_match_columns`` must be
    equal, other numerics must lie within ``numeric_tolerance`` (default 0).
    """

    protected_column: str
    min_gap: float
    ignore_columns: list[str]
    exact_match_columns: list[str] = field(default_factory=list)
    numeric_tolerance: dict[str, float] = field(default_factory=dict)
    disjoint: bool = True
    max_pairs: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.protected_column in self.exact_match_columns:
            raise ConfigError("protected column cannot be an exact-match column")
        if not self.min_gap > 0:
            raise ConfigError(f"min_gap must be positive, got {self.min_gap}")
        if any(t < 0 for t in self.numeric_tolerance.values()):
            raise ConfigError("numeric tolerances must be non-negative")
        if self.max_pairs is not None and self.max_pairs < 1:
            raise ConfigError("max_pairs must be at least 1")

    @classmethod
    def from_config(cls, parser, section="match") -> "MatchSpec":
        if not parser.has_section(section):
            raise ConfigError(f"config has no [{section}] section")
        s = parser[section]
        try:
            max_pairs = s.get("max_pairs", "").strip()
            return cls(
                protected_column=s["protected_column"].strip(),
                min_gap=float(s["min_gap"]),
                ignore_columns=split_list(s.get("ignore_columns")),
                exact_match_columns=split_list(s.get("exact_match_columns")),
                numeric_tolerance=split_map(s.get("numeric_tolerance")),
                disjoint=parse_bool(s.get("disjoint", "true")),
                max_pairs=int(max_pairs) if max_pairs else None,
                seed=int(s.get("seed", "0")),
            )
        except KeyError as exc:
            raise ConfigError(f"[{section}] missing key {exc}") from None

    def to_dict(self):
        return {
            "protected_column": self.protected_column,
            "min_gap": self.min_gap,
            "ignore_columns": list(self.ignore_columns),
            "exact_match_columns": list(self.exact_match_columns),
            "numeric_tolerance": dict(self.numeric_tolerance),
            "disjoint": self.disjoint,
            "max_pairs": self.max_pairs,
            "seed": self.seed,
        }


def _constraints(dataset, spec):
    schema = dataset.schema
    names = set(schema.names)
    for col in [spec.protected_column, *spec.ignore_columns, *spec.exact_match_columns, *spec.numeric_tolerance]:
        if col not in names:
            raise ConfigError(f"match spec names unknown column {col!r}")
    if schema.column(spec.protected_column).kind != "numeric":
        raise ConfigError("protected column must be numeric for a gap constraint")
    if schema.target.name not in spec.ignore_columns:
        raise ConfigError(f"target column {schema.target.name!r} must be listed in ignore_columns")
    exact, tolerant = [], {}
    for col in schema.columns:
        if col.name == spec.protected_column or col.name in spec.ignore_columns:
            continue
        tol = spec.numeric_tolerance.get(col.name, 0.0)
        if col.kind == "categorical" or col.name in spec.exact_match_columns or tol == 0.0:
            exact.append(col.name)
        else:
            tolerant[col.name] = tol
    return exact, tolerant


def _missing(value) -> bool:
    return value is None or (isinstance(value, float) and value != value)


def match_predicate(dataset, spec: MatchSpec, i: int, j: int) -> bool:
    """Full pair predicate, evaluated directly on two rows."""
    if i == j:
        return False
    exact, tolerant = _constraints(dataset, spec)
    cols = dataset.columns
    gap = abs(cols[spec.protected_column][i] - cols[spec.protected_column][j])
    if not gap >= spec.min_gap:
        return False
    for name in exact:
        a, b = cols[name][i], cols[name][j]
        if _missing(a) or _missing(b) or a != b:
            return False
    for name, tol in tolerant.items():
        a, b = cols[name][i], cols[name][j]
        if _missing(a) or _missing(b) or abs(a - b) > tol:
            return False
    return True


def _pair_count_equal(values) -> int:
    counts = defaultdict(int)
    for v in values:
        if not _missing(v):
            counts[v] += 1
    return sum(c * (c - 1) // 2 for c in counts.values())


def _pair_count_within(values, tol) -> int:
    x = np.sort(values[np.isfinite(values)])
    hi = np.searchsorted(x, x + tol, side="right")
    return int(np.sum(hi - np.arange(len(x)) - 1))


def match_statistics(dataset, spec: MatchSpec, blocked_candidates=None, gap_ok=None, found=None) -> dict:
    """Number of row pairs satisfying each constraint on its own."""
    exact, tolerant = _constraints(dataset, spec)
    n = dataset.n
    prot = dataset.columns[spec.protected_column]
    total = n * (n - 1) // 2
    stats = {
        "rows": n,
        "all_pairs": total,
        f"gap>={spec.min_gap:g} on {spec.protected_column}": total - _pair_count_within(prot, np.nextafter(spec.min_gap, -np.inf)),
    }
    for name in exact:
        stats[f"equal {name}"] = _pair_count_equal(dataset.columns[name])
    for name, tol in tolerant.items():
        stats[f"|diff {name}|<={tol:g}"] = _pair_count_within(dataset.columns[name], tol)
    if blocked_candidates is not None:
        stats["all exact constraints"] = blocked_candidates
    if gap_ok is not None:
        stats["all constraints"] = gap_ok
    if found is not None:
        stats["pairs returned"] = found
    return stats


def mine_pairs(dataset, spec: MatchSpec) -> PairSet:
    """Find row pairs that differ on the protected column by at least
    ``min_gap`` and agree on every other constrained column.

    Rows are bucketed on their exact-match key, so only rows inside a bucket
    are compared. With ``spec.disjoint`` each row is used at most once:
    rows are visited in a seeded random order and each takes the first
    still-free partner in that same order. Output is sorted by (i, j).
    """
    exact, tolerant = _constraints(dataset, spec)
    n = dataset.n
    cols = dataset.columns
    prot = cols[spec.protected_column]
    rng = np.random.default_rng(spec.seed)
    rank = np.empty(n, dtype=np.int64)
    rank[rng.permutation(n)] = np.arange(n)

    exact_cols = [cols[name] for name in exact]
    tol_items = [(cols[name], tol) for name, tol in tolerant.items()]
    buckets = defaultdict(list)
    for r in range(n):
        if not np.isfinite(prot[r]):
            continue
        key = tuple(c[r] for c in exact_cols)
        if any(_missing(v) for v in key):
            continue
        if any(not np.isfinite(c[r]) for c, _ in tol_items):
            continue
        buckets[key].append(r)

    candidates = 0
    found_i, found_j = [], []
    for members in buckets.values():
        m = len(members)
        if m < 2:
            continue
        candidates += m * (m - 1) // 2
        members.sort(key=lambda r: rank[r])
        idx = np.asarray(members)
        ages = prot[idx]
        tol_values = [(c[idx], tol) for c, tol in tol_items]

        def partners(a):
            ok = np.abs(ages - ages[a]) >= spec.min_gap
            for v, tol in tol_values:
                ok &= np.abs(v - v[a]) <= tol
            ok[a] = False
            return ok

        if spec.disjoint:
            taken = np.zeros(m, dtype=bool)
            for a in range(m):
                if taken[a]:
                    continue
                free = np.flatnonzero(partners(a) & ~taken)
                if len(free) == 0:
                    continue
                b = int(free[0])
                taken[a] = taken[b] = True
                found_i.append(members[a])
                found_j.append(members[b])
        else:
            for a in range(m):
                ok = partners(a)
                ok[: a + 1] = False
                found_i.extend([members[a]] * int(ok.sum()))
                found_j.extend(idx[ok].tolist())

    lo = np.minimum(found_i, found_j).astype(np.int64) if found_i else np.zeros(0, np.int64)
    hi = np.maximum(found_i, found_j).astype(np.int64) if found_i else np.zeros(0, np.int64)
    total_found = len(lo)
    if spec.max_pairs is not None and total_found > spec.max_pairs:
        keep = np.sort(rng.choice(total_found, size=spec.max_pairs, replace=False))
        lo, hi = lo[keep], hi[keep]
    if len(lo) == 0:
        stats = match_statistics(dataset, spec, candidates, 0, 0)
        raise EmptyPairsError("no pairs satisfy the match spec", stats)
    stats = match_statistics(dataset, spec, candidates, total_found, len(lo))
    return PairSet(lo, hi, provenance=spec.to_dict(), stats=stats).sorted()


def enumerate_pairs(dataset, spec: MatchSpec) -> PairSet:
    """Exhaustive O(N^2) enumeration of every pair satisfying the predicate."""
    out_i, out_j = [], []
    for i in range(dataset.n):
        for j in range(i + 1, dataset.n):
            if match_predicate(dataset, spec, i, j):
                out_i.append(i)
                out_j.append(j)
    return PairSet(out_i, out_j, provenance="enumeration")


def load_pairs(path, dataset=None, n_rows: int | None = None) -> PairSet:
    """Read ``i,j[,weight]`` rows (optional header) of 0-based dataset rows."""
    path = Path(path)
    if n_rows is None and dataset is not None:
        n_rows = len(dataset)
    pairs = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in record]
            if not cells or all(not c for c in cells):
                continue
            if lineno == 1 and not cells[0].lstrip("-").isdigit():
                continue
            if len(cells) not in (2, 3):
                raise PairError(f"{path}: line {lineno}: expected i,j[,weight]")
            try:
                i, j = int(cells[0]), int(cells[1])
                w = float(cells[2]) if len(cells) == 3 and cells[2] else 1.0
            except ValueError:
                raise PairError(f"{path}: line {lineno}: unparseable pair {record!r}") from None
            if n_rows is not None and not (0 <= i < n_rows and 0 <= j < n_rows):
                raise PairError(f"{path}: line {lineno}: dangling index in ({i}, {j}) for {n_rows} rows")
            try:
                pairs.append(ConsistencyPair(i, j, w))
            except PairError as exc:
                raise PairError(f"{path}: line {lineno}: {exc}") from None
    if not pairs:
        raise EmptyPairsError(f"{path}: no pairs in file")
    return PairSet.from_pairs(pairs, provenance="external file")


def save_pairs(pairs: PairSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "weight"])
        for a, b, w in zip(pairs.i, pairs.j, pairs.weights):
            writer.writerow([int(a), int(b), repr(float(w))])


def subsample_pairs(pairs: PairSet, n: int, seed: int) -> PairSet:
    """Seeded uniform sample of ``n`` pairs without replacement (input order kept)."""
    if not 1 <= n <= pairs.M:
        raise PairError(f"cannot sample {n} pairs from {pairs.M}")
    if n == pairs.M:
        return PairSet(pairs.i, pairs.j, pairs.weights, pairs.provenance, pairs.stats)
    keep = np.sort(np.random.default_rng(seed).choice(pairs.M, size=n, replace=False))
    return PairSet(pairs.i[keep], pairs.j[keep], pairs.weights[keep], pairs.provenance)
