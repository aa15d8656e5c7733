import os
from pathlib import Path

import numpy as np
import pytest

from paired_consistency.config import read_config
from paired_consistency.data import FeatureSchema, encode, load_csv, pair_aware_split
from paired_consistency.pairs import MatchSpec, mine_pairs

ROOT = Path(__file__).resolve().parents[1]
ADULT_CSV = Path(os.environ.get("PAIRCONS_ADULT", ROOT / "data" / "adult.csv"))
ADULT_CONFIG = ROOT / "configs" / "adult.ini"

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


class AdultExperiment:
    def __init__(self):
        parser = read_config(ADULT_CONFIG)
        self.schema = FeatureSchema.from_config(parser)
        self.dataset = load_csv(ADULT_CSV, self.schema)
        self.encoded = encode(self.dataset)
        self.spec = MatchSpec.from_config(parser)
        self.pairs = mine_pairs(self.dataset, self.spec)
        self.split = pair_aware_split(self.encoded, self.pairs, 0.2, seed=0)


@pytest.fixture(scope="session")
def adult():
    if not ADULT_CSV.is_file():
        pytest.skip(f"Census Income CSV not found at {ADULT_CSV}")
    return AdultExperiment()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
