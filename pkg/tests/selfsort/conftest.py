"""Shared fixtures for selfsort tests."""
from pathlib import Path

import pytest

from selfsort.config import RunConfig
from selfsort.coordinator import SelfSortCoordinator
from selfsort.engine.instance_model import World, generate_world
from selfsort.engine.po_model import LearnedModel
from selfsort.engine.vlist import VList

# Test constants
TEST_N = 6
TEST_G = 2
TEST_MU = 1
TEST_SIGMA = 2
TEST_SEED = 3

TEST_CONFIG_TOML = """
[world]
n = 6
g = 2
mu = 1
sigma = 2
seed = 3
source = "discrete"
atoms = 4

[learning]
seed = 11
rho = 0.25

[bench]
seed = 13
instances = 20
chernoff_runs = 100
"""


@pytest.fixture
def vlist_10_20() -> VList:
    """Landmarks V = (-inf, 10, 20, +inf)."""
    return VList((10.0, 20.0))


@pytest.fixture
def generated_world() -> World:
    """Small continuous world."""
    return generate_world(TEST_N, TEST_G, TEST_MU, TEST_SIGMA, TEST_SEED)


@pytest.fixture
def discrete_world() -> World:
    """Small world whose sources all have four atoms."""
    return generate_world(
        TEST_N, TEST_G, TEST_MU, TEST_SIGMA, TEST_SEED, source="discrete", atoms=4
    )


@pytest.fixture
def run_config(tmp_path: Path) -> RunConfig:
    """Run configuration matching the generated worlds."""
    return RunConfig(
        n=TEST_N,
        g=TEST_G,
        mu=TEST_MU,
        sigma=TEST_SIGMA,
        seed=TEST_SEED,
        rho=0.25,
        eval_instances=20,
        chernoff_runs=100,
        output_dir=tmp_path / "out",
    )


@pytest.fixture
def coordinator(run_config: RunConfig) -> SelfSortCoordinator:
    """Coordinator for the test configuration."""
    return SelfSortCoordinator(run_config)


@pytest.fixture
def learned_model(
    coordinator: SelfSortCoordinator, generated_world: World
) -> LearnedModel:
    """Model learned from the continuous world."""
    return coordinator.learn(world=generated_world)


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """TOML configuration on disk."""
    path = tmp_path / "run.toml"
    path.write_text(TEST_CONFIG_TOML, encoding="utf-8")
    return path
