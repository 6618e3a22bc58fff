"""Performance tests for the learning and operation phases."""
import gc
import os
import time

import psutil
import pytest

from selfsort.config import RunConfig
from selfsort.const import PRESET_DISCRETE
from selfsort.coordinator import SelfSortCoordinator
from selfsort.engine.instance_model import draw_instances, generate_world
from selfsort.engine.operation import sort_instance
from selfsort.engine.partition import monotone_partition_size
from selfsort.engine.po_model import PoTrie, encode_po
from selfsort.engine.vlist import build_vlist, lambda_for

pytestmark = [pytest.mark.slow, pytest.mark.performance]


@pytest.fixture(scope="module")
def learned_pair():
    """Discrete world of eight groups plus a model learned at full T."""
    coordinator = SelfSortCoordinator(
        RunConfig(n=16, g=8, mu=1, sigma=1, seed=41, source=PRESET_DISCRETE, atoms=16)
    )
    world, _ = coordinator.generate()
    return world, coordinator.learn(world=world)


def test_learning_performance():
    """Test a full learning pass on a desk-scale world."""
    coordinator = SelfSortCoordinator(RunConfig(n=16, g=4, mu=1, sigma=2, seed=3, rho=0.1))
    world, _ = coordinator.generate()

    start_time = time.time()
    model = coordinator.learn(world=world)
    learn_time = time.time() - start_time

    assert model.samples > 0
    assert learn_time < 30.0, f"Learning took {learn_time:.2f}s, expected < 30.0s"


def test_sort_throughput(learned_pair):
    """Test sorting stays fast once the model is learned."""
    world, model = learned_pair
    instances = draw_instances(world, 500, seed=42)

    sort_times = []
    for instance in instances:
        start_time = time.time()
        sort_instance(model, instance)
        sort_times.append(time.time() - start_time)

    avg_sort_time = sum(sort_times) / len(sort_times)
    max_sort_time = max(sort_times)

    assert avg_sort_time < 0.01, f"Average sort took {avg_sort_time * 1000:.2f}ms"
    assert max_sort_time < 0.1, f"Slowest sort took {max_sort_time * 1000:.2f}ms"


def test_fast_path_dominates(learned_pair):
    """Test a model learned at full T rarely falls back on its own world."""
    world, model = learned_pair
    fast = fallback = 0
    for instance in draw_instances(world, 300, seed=43):
        report = sort_instance(model, instance).report
        fast += report.fast
        fallback += report.fallback

    fallback_rate = fallback / (fast + fallback)
    assert fallback_rate < 0.05, f"Fallback rate {fallback_rate:.3f}, expected < 0.05"


def test_memory_usage_stability(learned_pair):
    """Test memory stays flat across many sorts."""
    world, model = learned_pair
    instances = draw_instances(world, 2000, seed=44)
    process = psutil.Process(os.getpid())
    gc.collect()
    initial_memory = process.memory_info().rss

    for cycle, instance in enumerate(instances):
        sort_instance(model, instance)
        if cycle % 200 == 0:
            gc.collect()

    gc.collect()
    memory_growth = process.memory_info().rss - initial_memory
    assert memory_growth < 10 * 1024 * 1024, f"Memory grew by {memory_growth / 1024 / 1024:.1f}MB"


def test_trie_build_performance():
    """Test building a trie from thousands of distinct outcomes."""
    world = generate_world(8, 1, 2, 2, seed=45)
    v = build_vlist(draw_instances(world, lambda_for(8), seed=46), 8)
    counts = {}
    for instance in draw_instances(world, 5000, seed=47):
        vector = encode_po(instance.values, v)
        counts[vector] = counts.get(vector, 0) + 1

    start_time = time.time()
    trie = PoTrie(range(8), v.n, counts)
    build_time = time.time() - start_time

    assert trie.leaves == len(counts)
    assert build_time < 5.0, f"Trie build took {build_time:.2f}s, expected < 5.0s"


def test_monotone_partition_performance():
    """Test exact D on long structured sequences."""
    zigzag = [v for k in range(64) for v in (k, 200 - k)]
    rising = list(range(256))

    start_time = time.time()
    assert monotone_partition_size(zigzag) == 2
    assert monotone_partition_size(rising) == 1
    search_time = time.time() - start_time

    assert search_time < 10.0, f"Search took {search_time:.2f}s, expected < 10.0s"
