"""Shared fixtures: a small, fast benchmark reused across unit tests."""
import numpy as np
import pytest

from flowcamo.core import split_dataset
from flowcamo.harness import synth


@pytest.fixture(scope="session")
def pool_schema():
    return synth.attacker_pool_schema()


@pytest.fixture(scope="session")
def target_schema():
    return synth.target_schema()


@pytest.fixture(scope="session")
def profiles(pool_schema):
    return synth.default_profiles(pool_schema, n_classes=8)


@pytest.fixture(scope="session")
def small_dataset(profiles, pool_schema):
    return synth.generate_dataset(profiles, rows_per_class=60, seed=7, schema=pool_schema)


@pytest.fixture(scope="session")
def small_split(small_dataset):
    return split_dataset(small_dataset, 0.8, seed=7)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)
