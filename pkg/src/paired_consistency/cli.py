"""Command-line pipeline: ingest -> mine-pairs -> train -> evaluate / importance / sweep.

Exit codes: 0 success, 2 I/O error, 3 data validation error, 4 empty mining
result, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, read_config, split_list
from .data import DataError, FeatureSchema, encode, load_csv, pair_aware_split, write_encoded_csv
from .importance import permutation_importance
from .logreg import LogisticModel, TrainingError
from .metrics import MetricError
from .pairs import EmptyPairsError, MatchSpec, PairError, PairSet, load_pairs, mine_pairs, save_pairs
from .report import (
    MODEL_KINDS,
    SweepSetup,
    _Labeler,
    eta_label,
    evaluate,
    group_assignment,
    make_estimator,
    model_handle,
    predictions_of,
    sweep_eta,
    sweep_pair_count,
    tradeoff_rows,
    write_manifest,
    write_tradeoff_csv,
)
from .tree import DecisionTree

EXIT_OK, EXIT_IO, EXIT_DATA, EXIT_EMPTY, EXIT_NUMERIC = 0, 2, 3, 4, 5
OUT_ENV = "PAIRCONS_OUT"

# key -> (type, default); [run] section keys use the same names as the flags
RUN_KEYS = {
    "data": (str, None),
    "schema": (str, None),
    "match": (str, None),
    "pairs": (str, None),
    "model": (str, "tree"),
    "model_file": (str, None),
    "eta": (float, 0.0),
    "grid": (str, None),
    "n_pairs": (str, None),
    "seed": (int, 0),
    "out": (str, None),
    "test_ratio": (float, 0.2),
    "protected": (str, "age"),
    "group_threshold": (float, 37.0),
    "max_pairs": (int, None),
    "epochs": (int, 500),
    "learning_rate": (float, 0.5),
    "l2": (float, 1e-6),
    "max_depth": (int, 5),
    "min_leaf": (int, 5),
    "k": (int, 5),
    "threshold": (float, 0.5),
    "repeats": (int, 5),
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def resolve_config(args) -> dict:
    """Defaults, then the [run] section of --config, then explicit flags."""
    resolved = {key: default for key, (_, default) in RUN_KEYS.items()}
    if args.config:
        parser = read_config(args.config)
        if parser.has_section("run"):
            for key, value in parser.items("run"):
                name = key.replace("-", "_")
                if name not in RUN_KEYS:
                    raise ConfigError(f"unknown [run] key {key!r}")
                value = value.strip()
                resolved[name] = RUN_KEYS[name][0](value) if value else None
        for name in ("schema", "match"):
            if resolved[name] is None:
                resolved[name] = args.config
    for name in RUN_KEYS:
        value = getattr(args, name, None)
        if value is not None:
            resolved[name] = value
    if resolved["out"] is None:
        resolved["out"] = os.environ.get(OUT_ENV, "runs")
    if args.config:
        resolved["config"] = args.config
    return resolved


def _require(cfg, *names):
    for name in names:
        if cfg.get(name) is None:
            raise CliError(f"missing required setting --{name.replace('_', '-')}", EXIT_DATA)


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "report.json"
    if stale.exists():
        stale.unlink()
    return out


def _load_dataset(cfg):
    _require(cfg, "data", "schema")
    schema = FeatureSchema.from_file(cfg["schema"])
    return load_csv(cfg["data"], schema)


def _load_pairs(cfg, dataset) -> PairSet:
    _require(cfg, "pairs")
    return load_pairs(cfg["pairs"], dataset)


def _split(cfg, dataset, pairs):
    encoded = encode(dataset)
    return pair_aware_split(encoded, pairs, cfg["test_ratio"], cfg["seed"])


def _model_params(cfg, kind):
    if kind == "logreg":
        return {"learning_rate": cfg["learning_rate"], "epochs": cfg["epochs"], "l2": cfg["l2"],
                "threshold": cfg["threshold"], "seed": cfg["seed"]}
    return {"max_depth": cfg["max_depth"], "min_leaf": cfg["min_leaf"], "seed": cfg["seed"]}


def _load_model(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind == "tree":
        return DecisionTree.from_dict(payload)
    if kind == "logreg":
        return LogisticModel.from_dict(payload)
    raise CliError(f"{path}: unknown model kind {kind!r}", EXIT_DATA)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_ingest(cfg) -> int:
    dataset = _load_dataset(cfg)
    out = _out_dir(cfg)
    encoded = encode(dataset)
    write_encoded_csv(encoded, out / "encoded.csv")
    diag = dataset.diagnostics.to_dict()
    diag.update({"rows": dataset.n, "features": encoded.n_features,
                 "positive_fraction": float(dataset.labels.mean()),
                 "vocabulary": dataset.vocabulary})
    _write_json(out / "diagnostics.json", diag)
    write_manifest(out, "ingest", cfg, [out / "encoded.csv", out / "diagnostics.json"])
    print(f"rows={dataset.n} dropped={dataset.diagnostics.dropped} features={encoded.n_features}")
    return EXIT_OK


def _print_stats(stats):
    for name, count in stats.items():
        print(f"  {name}: {count}")


def cmd_mine_pairs(cfg) -> int:
    dataset = _load_dataset(cfg)
    _require(cfg, "match")
    spec = MatchSpec.from_config(read_config(cfg["match"]))
    if cfg["max_pairs"] is not None:
        spec.max_pairs = cfg["max_pairs"]
    spec.seed = cfg["seed"]
    out = _out_dir(cfg)
    try:
        pairs = mine_pairs(dataset, spec)
    except EmptyPairsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("per-constraint matches:", file=sys.stderr)
        for name, count in exc.stats.items():
            print(f"  {name}: {count}", file=sys.stderr)
        return EXIT_EMPTY
    save_pairs(pairs, out / "pairs.csv")
    _write_json(out / "match_stats.json", {"spec": spec.to_dict(), "stats": pairs.stats})
    write_manifest(out, "mine-pairs", cfg, [out / "pairs.csv", out / "match_stats.json"])
    print(f"pairs={pairs.M}")
    _print_stats(pairs.stats)
    return EXIT_OK


def cmd_train(cfg) -> int:
    dataset = _load_dataset(cfg)
    pairs = _load_pairs(cfg, dataset)
    kind = cfg["model"]
    split = _split(cfg, dataset, pairs)
    out = _out_dir(cfg)
    est = make_estimator(kind, cfg["eta"], _model_params(cfg, kind))
    est.fit(split.train.matrix, split.train.labels, pairs=split.train_pairs)
    handle = model_handle(est)
    handle.feature_names = list(split.train.feature_names)
    handle.save(out / "model.json")
    outputs = [out / "model.json"]
    if kind == "logreg":
        trace_path = out / f"trace_eta_{eta_label(cfg['eta'])}.csv"
        est.trace_.to_csv(trace_path)
        outputs.append(trace_path)
    else:
        (out / "tree.txt").write_text(handle.render() + "\n", encoding="utf-8")
        outputs.append(out / "tree.txt")
    _write_json(out / "split.json", {"seed": cfg["seed"], "test_ratio": cfg["test_ratio"],
                                     "train_rows": split.train_index.tolist(), "test_rows": split.test_index.tolist()})
    outputs.append(out / "split.json")
    preds = predictions_of(handle, split.test.matrix, cfg["threshold"])
    acc = float(np.mean(preds.labels_hat == split.test.labels))
    write_manifest(out, "train", {**cfg, "test_accuracy": acc}, outputs)
    print(f"model={kind} eta={cfg['eta']} train_pairs={split.train_pairs.M} test_accuracy={acc:.4f}")
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    dataset = _load_dataset(cfg)
    pairs = _load_pairs(cfg, dataset)
    _require(cfg, "model_file")
    model = _load_model(cfg["model_file"])
    split = _split(cfg, dataset, pairs)
    out = _out_dir(cfg)
    groups = group_assignment(split.test, cfg["protected"], cfg["group_threshold"])
    report = evaluate(model, split.test, split.test_pairs, groups, k=cfg["k"], threshold=cfg["threshold"])
    report.to_csv(out / "fairness_report.csv")
    (out / "fairness_report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    write_manifest(out, "evaluate", {**cfg, "fairness_report": report.to_dict()},
                   [out / "fairness_report.csv", out / "fairness_report.json"])
    for name, value in report.to_dict().items():
        if name != "undefined":
            print(f"{name}: {value}")
    return EXIT_OK


def cmd_importance(cfg) -> int:
    dataset = _load_dataset(cfg)
    pairs = _load_pairs(cfg, dataset)
    _require(cfg, "model_file")
    model = _load_model(cfg["model_file"])
    split = _split(cfg, dataset, pairs)
    out = _out_dir(cfg)
    kind = "tree" if isinstance(model, DecisionTree) else "logreg"
    labeler = _Labeler(model, split.test.n_features, cfg["threshold"])
    report = permutation_importance(labeler, split.test, cfg["repeats"], cfg["seed"])
    path = out / f"importance_{kind}.csv"
    report.to_csv(path)
    write_manifest(out, "importance", cfg, [path])
    for e in report.entries[:10]:
        print(f"{e.rank:>3} {e.feature:<45} {e.mean_drop:.4f} +/- {e.std:.4f}")
    return EXIT_OK


def _parse_counts(text):
    counts = []
    for item in split_list(text):
        counts.append(None if item.lower() == "all" else int(item))
    return counts


def cmd_sweep(cfg) -> int:
    if cfg["grid"] is None and cfg["n_pairs"] is None:
        raise CliError("sweep needs --grid and/or --n-pairs", EXIT_DATA)
    dataset = _load_dataset(cfg)
    pairs = _load_pairs(cfg, dataset)
    kind = cfg["model"]
    split = _split(cfg, dataset, pairs)
    out = _out_dir(cfg)
    setup = SweepSetup(split.train, split.test, split.train_pairs, split.test_pairs,
                       protected=cfg["protected"], group_threshold=cfg["group_threshold"],
                       model_params=_model_params(cfg, kind), importance_repeats=cfg["repeats"],
                       seed=cfg["seed"], threshold=cfg["threshold"])
    outputs = []
    if cfg["grid"] is not None:
        grid = [float(v) for v in split_list(cfg["grid"])]
        result = sweep_eta(setup, kind, grid)
        result.to_csv(out / "sweep_eta.csv")
        outputs.append(out / "sweep_eta.csv")
        if kind == "logreg":
            for eta, trace in zip(result.grid, result.traces):
                path = out / f"trace_eta_{eta_label(eta)}.csv"
                trace.to_csv(path)
                outputs.append(path)
            write_tradeoff_csv(tradeoff_rows(result), out / "tradeoff.csv")
            outputs.append(out / "tradeoff.csv")
        _print_sweep(result)
    if cfg["n_pairs"] is not None:
        result = sweep_pair_count(setup, kind, _parse_counts(cfg["n_pairs"]), cfg["eta"])
        result.to_csv(out / "sweep_pairs.csv")
        outputs.append(out / "sweep_pairs.csv")
        _print_sweep(result)
    write_manifest(out, "sweep", cfg, outputs)
    return EXIT_OK


def _print_sweep(result):
    print(f"{result.parameter:>8} {'accuracy':>9} {'paired':>7} {'intact%':>8} {'prot.rank':>9}")
    for value, row in zip(result.grid, result.rows):
        pc = "" if row["paired_consistency"] is None else f"{row['paired_consistency']:.3f}"
        intact = "" if row["pct_pairs_intact"] is None else f"{row['pct_pairs_intact']:.1f}"
        print(f"{value:>8} {row['accuracy']:>9.4f} {pc:>7} {intact:>8} {row['protected_rank'] or '':>9}")


COMMANDS = {
    "ingest": cmd_ingest,
    "mine-pairs": cmd_mine_pairs,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paircons", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI file with [schema]/[columns]/[match]/[run] sections")
        p.add_argument("--data", help="input CSV")
        p.add_argument("--schema", help="schema config (defaults to --config)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
        p.add_argument("--seed", type=int)
        if name == "mine-pairs":
            p.add_argument("--match", help="config with a [match] section (defaults to --config)")
            p.add_argument("--max-pairs", dest="max_pairs", type=int)
            continue
        if name == "ingest":
            continue
        p.add_argument("--pairs", help="pair CSV (i,j[,weight])")
        p.add_argument("--test-ratio", dest="test_ratio", type=float)
        p.add_argument("--protected", help="protected feature name (default age)")
        p.add_argument("--group-threshold", dest="group_threshold", type=float,
                       help="protected value at or above which a row is privileged")
        p.add_argument("--threshold", type=float, help="classification threshold")
        if name in ("evaluate", "importance"):
            p.add_argument("--model-file", dest="model_file", help="model JSON written by train")
            p.add_argument("--k", type=int, help="neighbors for kNN consistency")
            p.add_argument("--repeats", type=int, help="permutation repeats")
            continue
        p.add_argument("--model", choices=MODEL_KINDS)
        p.add_argument("--eta", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--l2", type=float)
        p.add_argument("--max-depth", dest="max_depth", type=int)
        p.add_argument("--min-leaf", dest="min_leaf", type=int)
        if name == "sweep":
            p.add_argument("--grid", help="comma-separated eta values")
            p.add_argument("--n-pairs", dest="n_pairs", help="comma-separated pair counts, 'all' allowed")
            p.add_argument("--repeats", type=int, help="permutation repeats")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except EmptyPairsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DataError, ConfigError, PairError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, MetricError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
