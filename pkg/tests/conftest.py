from pathlib import Path

import numpy as np
import pytest

from surveyq.dataprep import (
    Dataset,
    FeatureSchema,
    Record,
    load_synth_spec,
    rank_features,
    split,
    synth_generate,
)
from surveyq.environment import EnvConfig, valid_action_ids

REPO_ROOT = Path(__file__).resolve().parents[1]
SPEC_DIR = REPO_ROOT / "synthspecs"


@pytest.fixture(scope="session")
def perfect_spec():
    return load_synth_spec(SPEC_DIR / "perfect_feature.json")


@pytest.fixture(scope="session")
def independent_spec():
    return load_synth_spec(SPEC_DIR / "independent_features.json")


@pytest.fixture(scope="session")
def mixed3_spec():
    return load_synth_spec(SPEC_DIR / "three_feature_mixed.json")


@pytest.fixture(scope="session")
def adaptive8_spec():
    return load_synth_spec(SPEC_DIR / "two_informative_of_eight.json")


@pytest.fixture(scope="session")
def perfect_data(perfect_spec):
    """Ranked + split desk-scale dataset for the perfect-feature task."""
    ds = synth_generate(perfect_spec, 10_000, seed=11)
    ds, _ = rank_features(ds)
    return split(ds, 0.2, seed=0)


@pytest.fixture(scope="session")
def adaptive8_data(adaptive8_spec):
    ds = synth_generate(adaptive8_spec, 10_000, seed=21)
    ds, _ = rank_features(ds)
    return split(ds, 0.2, seed=0)


def tiny_dataset() -> Dataset:
    """Four-record two-feature dataset handy for unit tests."""
    schema = (
        FeatureSchema("a", 2),
        FeatureSchema("b", 3),
    )
    records = (
        Record((0, 0), 0),
        Record((1, 2), 1),
        Record((0, 1), 0),
        Record((1, 0), 1),
    )
    return Dataset(schema=schema, records=records)


class RandomValidPolicy:
    """Deterministic policy built lazily: at each new (history, queries) state
    it commits to a uniformly chosen penalty-free action. Used to probe the
    oracle's optimality."""

    def __init__(self, config: EnvConfig, seed: int):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.choices: dict = {}

    def act(self, answered, queries_made):
        key = (tuple(sorted(answered.items())), queries_made)
        if key not in self.choices:
            ids = valid_action_ids(queries_made, self.config)
            self.choices[key] = int(ids[self.rng.integers(len(ids))])
        from surveyq.environment import action_from_id

        return action_from_id(self.choices[key], self.config)


def assert_accounting(metrics, cost: float = 0.05, tol: float = 1e-9):
    gap = metrics.identity_gap(cost)
    assert gap <= tol, f"accounting identity violated by {gap}"
