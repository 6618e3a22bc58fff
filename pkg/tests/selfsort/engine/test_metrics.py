"""Test entropy estimates, counters and diagnostics."""
from collections import Counter
from fractions import Fraction
import math

import pytest

from selfsort.const import PRESET_DISCRETE
from selfsort.engine.exceptions import EnumerationBudgetExceeded, NotEnumerableError
from selfsort.engine.metrics import (
    DescentRecord,
    EntropyGap,
    RunReport,
    binomial_margin,
    bucket_occupancy_stats,
    chernoff_diagnostic,
    descent_bound,
    entropy_bits,
    entropy_gap,
    exact_pi_distribution,
    exact_pi_entropy,
    exact_po_distribution,
    exact_po_entropy,
    fitted_constant,
    plugin_entropy,
    sampled_pi_entropy,
    unseen_mass_bound,
)
from selfsort.engine.instance_model import draw_instances, generate_world
from selfsort.engine.po_model import encode_po
from selfsort.engine.vlist import VList, build_vlist, lambda_for

from ..fixtures.worlds import crossing_world, separated_world


def _report(**kwargs) -> RunReport:
    """Consistent report for a two-element, one-group sort."""
    fields = {
        "n": 2,
        "groups": 1,
        "descent_comparisons": 4,
        "fast": 1,
        "bucket_sublists": {1: 1},
        "bucket_elements": {1: 2},
        "descents": [DescentRecord(0, 2, Fraction(1, 2), 4)],
    }
    fields.update(kwargs)
    return RunReport(**fields)


class TestPluginEntropy:
    """Test plug-in entropy."""

    def test_single_outcome(self):
        """Test one outcome has zero entropy."""
        assert plugin_entropy([10]).bits == 0

    def test_two_equal(self):
        """Test [500, 500] is one bit."""
        estimate = plugin_entropy([500, 500])
        assert estimate.bits == pytest.approx(1.0)
        assert estimate.support == 2
        assert estimate.samples == 1000
        assert not estimate.small_sample

    def test_four_singletons(self):
        """Test four single observations are two bits and flagged small."""
        estimate = plugin_entropy([1, 1, 1, 1])
        assert estimate.bits == pytest.approx(2.0)
        assert estimate.small_sample
        assert estimate.standard_error == pytest.approx(0.0)

    def test_zero_counts_ignored(self):
        """Test zero counts do not change the estimate."""
        assert plugin_entropy([3, 0, 3]).bits == pytest.approx(1.0)

    @pytest.mark.parametrize(("counts", "message"), [([], "positive"), ([2, -1], "non-negative")])
    def test_invalid(self, counts, message):
        """Test empty or negative counts are rejected."""
        with pytest.raises(ValueError, match=message):
            plugin_entropy(counts)

    def test_sampled_pi(self):
        """Test entropy of observed rankings."""
        estimate = sampled_pi_entropy([(1, 2), (2, 1), (1, 2), (2, 1)])
        assert estimate.bits == pytest.approx(1.0)

    def test_entropy_bits(self):
        """Test entropy of an exact distribution."""
        assert entropy_bits([Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]) == pytest.approx(1.5)
        assert entropy_bits([Fraction(1), Fraction(0)]) == 0


class TestExactEntropies:
    """Test enumeration on discrete worlds."""

    def test_po_distribution(self):
        """Test two atoms with distinct outcomes."""
        world = crossing_world((Fraction(1, 4), Fraction(3, 4)))
        v = VList((0.25, 0.75))
        distribution = exact_po_distribution(world.groups[0], v)
        assert distribution == {(1, 2): Fraction(1, 2), (2, 1): Fraction(1, 2)}
        assert exact_po_entropy(world.groups[0], v) == pytest.approx(1.0)

    def test_pi_distribution(self):
        """Test the crossing pair swaps with the atom."""
        world = crossing_world((Fraction(1, 4), Fraction(3, 4)))
        assert exact_pi_distribution(world) == {
            (1, 2): Fraction(1, 2),
            (2, 1): Fraction(1, 2),
        }
        assert exact_pi_entropy(world) == pytest.approx(1.0)

    def test_separated_world_has_fixed_order(self):
        """Test non-interleaving groups give a single ranking."""
        assert exact_pi_entropy(separated_world()) == 0

    def test_entropy_gap(self):
        """Test outcome entropy exceeds ranking entropy when groups never interleave."""
        world = separated_world()
        gap = entropy_gap(world, VList((0.5, 1.5, 10.5, 12.5)))
        assert gap.pi_entropy == 0
        assert gap.sum_po_entropy == pytest.approx(2.0)
        assert gap.gap == pytest.approx(2.0)
        assert gap.constant == pytest.approx(0.5)
        assert gap.as_dict()["group_entropies"] == [pytest.approx(1.0), pytest.approx(1.0)]

    def test_empty_gap_constant(self):
        """Test the constant of an empty world is zero."""
        assert EntropyGap((), 0.0, 0).constant == 0.0

    def test_continuous_not_enumerable(self, generated_world):
        """Test continuous worlds cannot be enumerated."""
        with pytest.raises(NotEnumerableError):
            exact_pi_entropy(generated_world)

    def test_budget(self):
        """Test the joint atom budget."""
        with pytest.raises(EnumerationBudgetExceeded, match="budget 3"):
            exact_pi_entropy(separated_world(), budget=3)


class TestEntropyConvergence:
    """Test plug-in estimates approach the exact outcome entropy."""

    @pytest.mark.parametrize("seed", [3, 17, 42])
    def test_plugin_converges_to_exact(self, seed):
        """Test |plug-in - exact| <= 0.1 bits with T >= 10 K log2 K samples."""
        world = generate_world(6, 2, 1, 1, seed, source=PRESET_DISCRETE, atoms=16)
        v = build_vlist(draw_instances(world, lambda_for(6), seed=seed), 6)
        stream = draw_instances(world, 2000, seed=seed + 1)
        for group in world.groups:
            exact = exact_po_distribution(group, v)
            outcomes = len(exact)
            samples = max(math.ceil(10 * outcomes * math.log2(outcomes)), 2000)
            if samples > len(stream):
                stream = draw_instances(world, samples, seed=seed + 1)
            counts = Counter(
                encode_po([instance.values[i] for i in group.members], v)
                for instance in stream[:samples]
            )
            assert set(counts) <= set(exact)
            estimate = plugin_entropy(counts.values())
            assert abs(estimate.bits - entropy_bits(exact.values())) <= 0.1


class TestBounds:
    """Test allowance formulas."""

    def test_descent_bound(self):
        """Test 3(n_k + log2(1/q)) + 8."""
        assert descent_bound(2, Fraction(1, 4)) == 20
        assert descent_bound(1, 1) == 11

    def test_unseen_mass(self):
        """Test W / (T + 1), capped at 1."""
        assert unseen_mass_bound(10, 99) == pytest.approx(0.1)
        assert unseen_mass_bound(10, 3) == 1.0

    def test_binomial_margin(self):
        """Test three standard deviations."""
        assert binomial_margin(0.5, 100) == pytest.approx(0.15)
        assert binomial_margin(0.0, 100) == 0

    def test_fitted_constant(self):
        """Test c = mean / (H + n)."""
        assert fitted_constant(30.0, 2.0, 4) == pytest.approx(5.0)


class TestRunReport:
    """Test run counters."""

    def test_consistent(self):
        """Test a consistent report has no errors."""
        report = _report()
        assert report.consistency_errors() == []
        assert report.total_comparisons == 4
        assert report.descent_violations == 0
        assert report.mean_sublists == 1.0

    def test_inconsistent(self):
        """Test each counter mismatch is reported."""
        report = _report(fallback=1, merge_comparisons=-1, bucket_elements={1: 1})
        errors = report.consistency_errors()
        assert "merge_comparisons is negative" in errors
        assert "fast 1 + fallback 1 != groups 1" in errors
        assert "bucket elements sum to 1, not 2" in errors

    def test_descent_violation(self):
        """Test a descent over its bound is counted."""
        record = DescentRecord(0, 1, Fraction(1), 12)
        report = _report(descents=[record], descent_comparisons=12)
        assert not record.within_bound
        assert report.descent_violations == 1

    def test_row_has_no_timestamps(self):
        """Test CSV rows stay reproducible."""
        row = _report().as_row()
        assert "started" not in row and "finished" not in row
        assert row["comparisons"] == 4
        assert row["max_sublists"] == 1

    def test_empty_buckets(self):
        """Test mean sublists with no buckets."""
        assert RunReport(n=0, groups=0).mean_sublists == 0.0


class TestChernoff:
    """Test the Chernoff diagnostic."""

    def test_certain_outcome(self):
        """Test p = 1 never drops to half."""
        report = chernoff_diagnostic([1], runs=100, samples=200, seed=1)
        assert report.rows[0].rate == 0.0
        assert report.violations == 0

    def test_fair_coin(self):
        """Test p = 1/2 with T = 200 stays within the bound."""
        report = chernoff_diagnostic([0.5, 0.5], runs=1000, samples=200, seed=2)
        assert len(report.rows) == 2
        assert report.violations == 0
        assert report.as_dict()["runs"] == 1000

    def test_min_probability(self):
        """Test small outcomes can be skipped."""
        report = chernoff_diagnostic([0.98, 0.02], runs=100, samples=50, seed=3, min_probability=0.05)
        assert [row.outcome for row in report.rows] == [0]

    def test_rate_matches_exact_binomial_tail(self):
        """Test the rate estimates Pr(q <= p/2) under the exact law."""
        # T = 2, p = 1/2: q <= 1/4 only when the outcome is never drawn
        report = chernoff_diagnostic([0.5, 0.5], runs=4000, samples=2, seed=5)
        for row in report.rows:
            assert row.rate == pytest.approx(0.25, abs=0.03)

    def test_deterministic(self):
        """Test the same seed gives the same report."""
        first = chernoff_diagnostic([0.3, 0.7], runs=200, samples=20, seed=4)
        assert chernoff_diagnostic([0.3, 0.7], runs=200, samples=20, seed=4) == first

    def test_too_few_runs(self):
        """Test R < 100 is rejected."""
        with pytest.raises(ValueError, match="R >= 100"):
            chernoff_diagnostic([1], runs=99, samples=10, seed=1)

    def test_no_samples(self):
        """Test T < 1 is rejected."""
        with pytest.raises(ValueError, match="T must be positive"):
            chernoff_diagnostic([1], runs=100, samples=0, seed=1)


class TestOccupancy:
    """Test bucket occupancy aggregation."""

    def test_stats(self):
        """Test per-bucket and global means."""
        reports = [
            _report(bucket_sublists={1: 1, 2: 3}),
            _report(bucket_sublists={1: 3}),
        ]
        stats = bucket_occupancy_stats(reports)
        assert stats.per_bucket_mean == {1: 2.0, 2: 3.0}
        assert stats.global_mean == pytest.approx(7 / 3)
        assert stats.max_sublists == 3
        assert stats.as_dict()["per_bucket_mean"] == {"1": 2.0, "2": 3.0}

    def test_empty(self):
        """Test at least one report is needed."""
        with pytest.raises(ValueError, match="at least one"):
            bucket_occupancy_stats([])

