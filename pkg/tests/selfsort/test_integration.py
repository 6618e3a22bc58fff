"""End-to-end checks of the learning and operation phases on seeded corpora."""
import logging

import numpy as np
import pytest

from selfsort.config import RunConfig
from selfsort.const import (
    PRESET_CONTINUOUS,
    PRESET_DISCRETE,
    PRESET_GAUSSIAN,
    PRESET_MIXED,
    PRESET_POINT,
)
from selfsort.coordinator import SelfSortCoordinator
from selfsort.engine.codec import SelfSortCodec, dumps
from selfsort.engine.instance_model import Instance, draw_instances, generate_world
from selfsort.engine.metrics import entropy_gap
from selfsort.engine.operation import sort_instance
from selfsort.engine.oracle import (
    enumerate_outcomes,
    exhaustive_monotone_partition,
    reference_sort,
)
from selfsort.engine.partition import (
    SampleMatrix,
    learn_partition,
    monotone_partition_size,
    partition_sample_count,
    same_group_statistic,
    same_group_threshold,
)
from selfsort.engine.po_model import encode_po, outcome_bound
from selfsort.engine.vlist import build_vlist, lambda_for

from .fixtures.worlds import ADVERSARIAL_SEQUENCES

pytestmark = [pytest.mark.slow, pytest.mark.integration]

_LOGGER = logging.getLogger(__name__)

# (n, g, mu, sigma, source, seed)
CORRECTNESS_WORLDS = [
    (16, 1, 0, 0, PRESET_CONTINUOUS, 1),
    (16, 4, 1, 2, PRESET_DISCRETE, 2),
    (16, 16, 0, 0, PRESET_CONTINUOUS, 3),
    (16, 8, 2, 4, PRESET_GAUSSIAN, 4),
    (16, 2, 3, 1, PRESET_MIXED, 5),
    (16, 5, 1, 3, PRESET_POINT, 6),
    (16, 3, 3, 4, PRESET_DISCRETE, 7),
    (64, 8, 1, 2, PRESET_CONTINUOUS, 8),
    (64, 64, 0, 0, PRESET_DISCRETE, 9),
    (64, 3, 2, 1, PRESET_MIXED, 10),
    (256, 16, 1, 2, PRESET_DISCRETE, 11),
    (256, 64, 2, 1, PRESET_CONTINUOUS, 12),
    (256, 1, 0, 0, PRESET_CONTINUOUS, 13),
]

# mu**4 rows at mu = 3, below the learning default of 128
INDEPENDENT_ROWS = 81

SWEEP_ATOMS = (1, 2, 4, 8, 16, 32, 64)
SWEEP_WORLDS = 21
SWEEP_N = 12

# Largest comparisons / (H + n) tolerated across the sweep
MAX_FITTED_CONSTANT = 16


def _sweep_config(index: int) -> RunConfig:
    atoms = SWEEP_ATOMS[index % len(SWEEP_ATOMS)]
    return RunConfig(
        n=SWEEP_N,
        g=1 + index % 3,
        mu=index % 3,
        sigma=index % 4,
        seed=100 + index,
        source=PRESET_POINT if atoms == 1 else PRESET_DISCRETE,
        atoms=atoms,
        rho=0.1,
        eval_instances=200,
        chernoff_runs=1000,
    )


@pytest.fixture(scope="module")
def correctness_corpus():
    """Learned models with their bench results over mixed sources and sizes."""
    corpus = []
    for n, g, mu, sigma, source, seed in CORRECTNESS_WORLDS:
        config = RunConfig(
            n=n,
            g=g,
            mu=mu,
            sigma=sigma,
            seed=seed,
            source=source,
            atoms=8,
            rho=0.02,
            eval_instances=100,
        )
        coordinator = SelfSortCoordinator(config)
        world, report = coordinator.generate()
        assert report.ok, report.violations
        model = coordinator.learn(world=world)
        corpus.append((world, model, coordinator.bench(world, model)))
    return corpus


@pytest.fixture(scope="module")
def entropy_sweep():
    """Discrete worlds from a point mass up to 64 atoms per source."""
    sweep = []
    for index in range(SWEEP_WORLDS):
        coordinator = SelfSortCoordinator(_sweep_config(index))
        world, _ = coordinator.generate()
        model = coordinator.learn(world=world)
        sweep.append((coordinator, world, model, coordinator.bench(world, model)))
    return sweep


def test_sorted_output_matches_reference(correctness_corpus):
    """Test every benched instance sorts exactly like the reference sort."""
    runs = 0
    for world, model, bench in correctness_corpus:
        assert bench.summary.runs == 100
        runs += bench.summary.runs
        for instance in draw_instances(world, 5, seed=world.seed + 1000):
            assert sort_instance(model, instance).ranks == reference_sort(instance.values)
    assert runs >= 1000


def test_descents_within_bound(correctness_corpus, entropy_sweep):
    """Test no FAST descent exceeds 3(n_k + log2(1/q)) + 8 comparisons."""
    results = [bench for _, _, bench in correctness_corpus]
    results += [bench for _, _, _, bench in entropy_sweep]
    for bench in results:
        assert bench.summary.descent_violations == 0
        for report in bench.reports:
            assert all(record.within_bound for record in report.descents)
            assert report.consistency_errors() == []


def test_bucket_occupancy(correctness_corpus, entropy_sweep):
    """Test mean sublists per nonempty bucket averaged over the corpus."""
    means = [bench.summary.occupancy.global_mean for _, _, bench in correctness_corpus]
    means += [bench.summary.occupancy.global_mean for _, _, _, bench in entropy_sweep]
    _LOGGER.info("Per-world occupancy means: %s", means)
    assert sum(means) / len(means) <= 4


def test_monotone_partition_matches_exhaustive():
    """Test exact D against the exhaustive oracle on 10,000 short sequences."""
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        length = int(rng.integers(0, 11))
        seq = rng.integers(0, 8, size=length).tolist()
        assert monotone_partition_size(seq) == exhaustive_monotone_partition(seq), seq
    for seq in ADVERSARIAL_SEQUENCES.values():
        assert monotone_partition_size(seq) == exhaustive_monotone_partition(seq)


@pytest.mark.parametrize("mu", [0, 1, 2, 3])
def test_same_group_pairs_within_threshold(mu):
    """Test two members of one group never exceed 2*mu + 1."""
    m = partition_sample_count(mu)
    for trial in range(50):
        world = generate_world(2, 1, mu, trial % 5, seed=500 + 50 * mu + trial)
        samples = SampleMatrix.from_instances(draw_instances(world, m, seed=trial))
        assert same_group_statistic(samples, 0, 1) <= same_group_threshold(mu)


def test_independent_pairs_separated():
    """Test independent columns at mu = 3 are kept apart in at least 95% of trials."""
    m = INDEPENDENT_ROWS
    separated = 0
    trials = 500
    for trial in range(trials):
        rng = np.random.default_rng(trial)
        instances = [Instance(tuple(row)) for row in rng.random((m, 2)).tolist()]
        result = learn_partition(SampleMatrix.from_instances(instances), 3)
        separated += result.groups == ((0,), (1,))
    _LOGGER.info("Independent pairs separated: %d/%d", separated, trials)
    assert separated >= 0.95 * trials


def test_partition_recovery():
    """Test the exact partition is learned on at least 95% of continuous worlds."""
    worlds = 200
    misses = []
    for index in range(worlds):
        mu = index % 4
        world = generate_world(6, 1 + index % 4, mu, index % 3, seed=1000 + index)
        m = partition_sample_count(mu)
        samples = SampleMatrix.from_instances(draw_instances(world, m, seed=index))
        learned = learn_partition(samples, mu)
        truth = {group.members for group in world.groups}
        if set(learned.groups) != truth:
            detailed = learn_partition(samples, mu, record_statistics=True)
            _LOGGER.warning(
                "World %d: learned %s, truth %s, D=%s",
                world.seed,
                learned.groups,
                sorted(truth),
                detailed.statistics,
            )
            misses.append(world.seed)
    assert len(misses) <= 0.05 * worlds, misses


def test_comparisons_track_entropy(entropy_sweep):
    """Test one constant c <= 16 bounds comparisons by c(H + n) across the sweep."""
    constants = [bench.summary.fitted_constant for _, _, _, bench in entropy_sweep]
    _LOGGER.info("Fitted constants: %s", constants)
    assert max(constants) <= MAX_FITTED_CONSTANT


def test_point_mass_has_zero_entropy(entropy_sweep):
    """Test single-atom worlds always produce the same ranking."""
    for _, world, model, bench in entropy_sweep:
        if all(len(group.source.atoms) == 1 for group in world.groups):
            assert bench.summary.pi_entropy.bits == 0
            assert bench.summary.fallback_rate == 0
            assert model.learned_entropy() == 0


def test_exact_outcome_support(entropy_sweep):
    """Test enumerated outcome support never exceeds W on discrete worlds."""
    for _, world, model, _ in entropy_sweep:
        for group in world.groups:
            distribution = enumerate_outcomes(
                group, model.vlist.landmarks, mu=world.mu, sigma=world.sigma
            )
            assert distribution.within_bound, (world.seed, group.group_id)


@pytest.mark.parametrize(
    ("n", "g", "mu", "sigma", "seed"),
    [(16, 4, 1, 2, 1), (16, 2, 3, 0, 2), (12, 12, 0, 0, 3), (10, 1, 2, 4, 4)],
)
def test_realized_outcome_support(n, g, mu, sigma, seed):
    """Test distinct realized outcomes of continuous groups stay within W."""
    world = generate_world(n, g, mu, sigma, seed)
    v = build_vlist(draw_instances(world, lambda_for(n), seed=seed), n)
    seen = [set() for _ in world.groups]
    for instance in draw_instances(world, 2000, seed=seed + 1):
        for outcomes, group in zip(seen, world.groups):
            outcomes.add(encode_po([instance.values[i] for i in group.members], v))
    for outcomes, group in zip(seen, world.groups):
        assert len(outcomes) <= outcome_bound(group.size, n, mu, sigma)


def test_entropy_identity(entropy_sweep):
    """Test the per-group entropies sum to H(pi) within 4n bits."""
    for _, world, model, _ in entropy_sweep:
        gap = entropy_gap(world, model.vlist)
        _LOGGER.info("World %d: gap %.3f, constant %.3f", world.seed, gap.gap, gap.constant)
        assert abs(gap.gap) <= 4 * world.n


def test_chernoff_diagnostic(entropy_sweep):
    """Test no outcome with p >= 0.05 breaks the Chernoff allowance over R = 1000."""
    for coordinator, world, model, _ in entropy_sweep:
        report = coordinator.diagnose(world, model)
        assert report.skipped == []
        assert report.chernoff_violations == 0
        for group in report.groups:
            assert group.chernoff.runs == 1000
            assert group.bound is None or group.support <= group.bound


def test_documents_round_trip(correctness_corpus, entropy_sweep):
    """Test worlds and models re-encode to the same bytes."""
    pairs = [(world, model) for world, model, _ in correctness_corpus]
    pairs += [(world, model) for _, world, model, _ in entropy_sweep]
    for world, model in pairs:
        document = SelfSortCodec.encode_world(world)
        decoded = SelfSortCodec.decode_world(document)
        assert decoded == world
        assert dumps(SelfSortCodec.encode_world(decoded)) == dumps(document)
        document = SelfSortCodec.encode_model(model)
        decoded_model = SelfSortCodec.decode_model(document)
        assert dumps(SelfSortCodec.encode_model(decoded_model)) == dumps(document)


def test_identical_seeds_identical_runs():
    """Test two runs from the same configuration agree end to end."""
    outputs = []
    for _ in range(2):
        coordinator = SelfSortCoordinator(_sweep_config(5))
        world, _ = coordinator.generate()
        model = coordinator.learn(world=world)
        bench = coordinator.bench(world, model)
        outputs.append(
            (
                dumps(SelfSortCodec.encode_world(world)),
                dumps(SelfSortCodec.encode_model(model)),
                bench.reports,
                dumps(bench.summary.as_dict()),
            )
        )
    assert outputs[0] == outputs[1]
