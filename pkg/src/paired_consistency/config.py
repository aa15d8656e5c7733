"""Declarative key/value config files (INI dialect) shared by every command.

A single file may carry any of these sections::

    [schema]
    target_positive_value = >50K
    missing_values = ?

    [columns]
    age = numeric protected
    workclass = categorical feature
    income = categorical target

    [match]
    protected_column = age
    min_gap = 10
    ignore_columns = income, fnlwgt
    numeric_tolerance = hours-per-week:0
    disjoint = true
    seed = 0

    [run]
    data = data/adult.csv
    model = tree
    eta = 0.5

Keys are case sensitive. List values are comma separated; maps are
``key:value`` items separated by commas.
"""

from __future__ import annotations

import configparser
from pathlib import Path


class ConfigError(ValueError):
    pass


def read_config(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parser


def split_list(value: str | None) -> list[str]:
    if value is None:
        return []
    return [item.strip() for item in value.split(",") if item.strip()]


def split_map(value: str | None) -> dict[str, float]:
    out = {}
    for item in split_list(value):
        key, sep, num = item.rpartition(":")
        if not sep:
            raise ConfigError(f"expected key:value, got {item!r}")
        try:
            out[key.strip()] = float(num)
        except ValueError as exc:
            raise ConfigError(f"non-numeric value in {item!r}") from exc
    return out


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ConfigError(f"not a boolean: {value!r}")
