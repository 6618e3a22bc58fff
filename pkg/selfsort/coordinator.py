"""Phase coordinator: generation, learning, benchmarking and diagnostics."""
from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from itertools import islice
import logging
from typing import Any

from .config import RunConfig
from .engine.exceptions import (
    EnumerationBudgetExceeded,
    InsufficientInstancesError,
    LearningError,
    ModelMismatchError,
    OracleMismatchError,
)
from .engine.instance_model import (
    Instance,
    ValidationReport,
    World,
    generate_world,
    instance_stream,
    validate_world,
)
from .engine.metrics import (
    ChernoffReport,
    EntropyEstimate,
    EntropyGap,
    OccupancyStats,
    RunReport,
    bucket_occupancy_stats,
    chernoff_diagnostic,
    entropy_bits,
    entropy_gap,
    fitted_constant,
    sampled_pi_entropy,
)
from .engine.operation import sort_instance
from .engine.oracle import enumerate_outcomes, reference_sort
from .engine.partition import (
    PartitionResult,
    SampleMatrix,
    learn_partition,
    partition_sample_count,
)
from .engine.po_model import (
    LearnedModel,
    learn_po_distribution,
    required_samples,
    scaled_samples,
)
from .engine.vlist import build_vlist, lambda_for

_LOGGER = logging.getLogger(__name__)

# Outcomes rarer than this are left out of the Chernoff check
CHERNOFF_MIN_PROBABILITY = 0.05


@dataclass(frozen=True)
class BenchSummary:
    """Aggregate of one benchmark."""

    runs: int
    n: int
    groups: int
    mean_comparisons: float
    mean_descent: float
    mean_fallback: float
    mean_merge: float
    pi_entropy: EntropyEstimate
    sum_po_entropy: float
    fitted_constant: float
    fallback_rate: float
    occupancy: OccupancyStats
    descent_violations: int

    def as_dict(self) -> dict[str, Any]:
        """Serialize for the summary report."""
        return {
            "runs": self.runs,
            "n": self.n,
            "groups": self.groups,
            "mean_comparisons": self.mean_comparisons,
            "mean_descent_comparisons": self.mean_descent,
            "mean_fallback_comparisons": self.mean_fallback,
            "mean_merge_comparisons": self.mean_merge,
            "pi_entropy": self.pi_entropy.as_dict(),
            "sum_po_entropy": self.sum_po_entropy,
            "fitted_constant": self.fitted_constant,
            "fallback_rate": self.fallback_rate,
            "occupancy": self.occupancy.as_dict(),
            "descent_violations": self.descent_violations,
        }


@dataclass(frozen=True)
class BenchResult:
    """Per-run reports plus their summary."""

    reports: tuple[RunReport, ...]
    summary: BenchSummary


@dataclass
class GroupDiagnostic:
    """Exact outcome statistics of one enumerable group."""

    group: int
    support: int
    bound: int | None
    entropy: float
    chernoff: ChernoffReport

    def as_dict(self) -> dict[str, Any]:
        """Serialize for reports."""
        return {
            "group": self.group,
            "support": self.support,
            "bound": self.bound,
            "within_bound": self.bound is None or self.support <= self.bound,
            "entropy": self.entropy,
            "chernoff": self.chernoff.as_dict(),
        }


@dataclass
class DiagnosticReport:
    """Chernoff, occupancy and entropy identity diagnostics."""

    occupancy: OccupancyStats
    groups: list[GroupDiagnostic] = field(default_factory=list)
    gap: EntropyGap | None = None
    skipped: list[str] = field(default_factory=list)

    @property
    def chernoff_violations(self) -> int:
        """Violations across every group."""
        return sum(g.chernoff.violations for g in self.groups)

    def as_dict(self) -> dict[str, Any]:
        """Serialize for reports."""
        return {
            "occupancy": self.occupancy.as_dict(),
            "groups": [g.as_dict() for g in self.groups],
            "entropy_gap": None if self.gap is None else self.gap.as_dict(),
            "chernoff_violations": self.chernoff_violations,
            "skipped": list(self.skipped),
        }

    def as_rows(self) -> list[dict[str, Any]]:
        """One CSV row per Chernoff outcome."""
        return [
            {
                "group": g.group,
                "outcome": row.outcome,
                "probability": row.probability,
                "bound": row.bound,
                "rate": row.rate,
                "margin": row.margin,
                "violated": row.violated,
            }
            for g in self.groups
            for row in g.chernoff.rows
        ]


class _Feed:
    """Fresh instances consumed phase by phase, never reused."""

    def __init__(self, instances: Iterator[Instance], available: int | None) -> None:
        self._instances = instances
        self.available = available
        self.used = 0

    def require(self, total: int, phase: str) -> None:
        if self.available is not None and self.available < total:
            raise InsufficientInstancesError(
                f"Recorded stream has {self.available} instances but {phase} needs "
                f"{total}; short by {total - self.available}",
                required=total,
                available=self.available,
            )

    def take(self, count: int) -> list[Instance]:
        batch = list(islice(self._instances, count))
        self.used += len(batch)
        if len(batch) < count:
            raise InsufficientInstancesError(
                f"Stream ended after {self.used} instances",
                required=self.used - len(batch) + count,
                available=self.used,
            )
        return batch


class SelfSortCoordinator:
    """Run the pipeline phases for one configuration."""

    def __init__(self, config: RunConfig) -> None:
        """Initialize coordinator."""
        self.config = config

    def generate(self) -> tuple[World, ValidationReport]:
        """Generate and validate a world."""
        config = self.config
        world = generate_world(
            config.n,
            config.g,
            config.mu,
            config.sigma,
            config.seed,
            source=config.source,
            atoms=config.atoms,
            value_levels=config.value_levels,
            grid_points=config.grid_points,
            attempt_budget=config.attempt_budget,
        )
        report = validate_world(world)
        if not report.ok:
            _LOGGER.error("Generated world fails validation: %s", report.violations)
        return world, report

    def learn_partition(
        self, instances: Sequence[Instance], mu: int
    ) -> PartitionResult:
        """Learn the partition from recorded samples."""
        return learn_partition(
            SampleMatrix.from_instances(instances),
            mu,
            record_statistics=self.config.record_statistics,
            budget=self.config.search_budget,
        )

    def learn(
        self,
        world: World | None = None,
        stream: Sequence[Instance] | None = None,
    ) -> LearnedModel:
        """Partition, then V-list, then outcome tries, each from fresh instances."""
        config = self.config
        if world is not None:
            feed = _Feed(instance_stream(world, config.learn_seed), None)
            n, mu, sigma = world.n, world.mu, world.sigma
        elif stream:
            feed = _Feed(iter(stream), len(stream))
            n, mu, sigma = stream[0].n, config.mu, config.sigma
        else:
            raise LearningError("Learning needs a world or a non-empty instance stream")

        m = partition_sample_count(mu, config.partition_samples)
        lam = config.lam or lambda_for(n)
        feed.require(m + lam + 1, "partition and V-list learning")

        partition = self.learn_partition(feed.take(m), mu)
        vlist = build_vlist(feed.take(lam), n, lam=lam)

        required = required_samples(n, partition.largest_group, mu, sigma)
        samples = scaled_samples(required, config.rho)
        feed.require(m + lam + samples, "outcome learning")
        _LOGGER.info(
            "Learning outcomes from %d instances (T=%d, rho=%s)",
            samples,
            required,
            config.rho,
        )

        provenance: dict[str, int | float | str] = {
            "partition_samples": m,
            "lambda": lam,
            "learn_seed": config.learn_seed,
            "instances_used": m + lam + samples,
            "origin": "world" if world is not None else "stream",
        }
        if world is not None and world.seed is not None:
            provenance["world_seed"] = world.seed
        return learn_po_distribution(
            feed.take(samples),
            partition,
            vlist,
            samples,
            mu=mu,
            sigma=sigma,
            rho=config.rho,
            required=required,
            provenance=provenance,
        )

    def bench(self, world: World, model: LearnedModel) -> BenchResult:
        """Sort fresh instances, cross-checking each against the reference sort."""
        if model.n != world.n:
            raise ModelMismatchError(f"Model for n={model.n}, world has n={world.n}")
        runs = self.config.eval_instances
        reports = []
        rankings = []
        stream = instance_stream(world, self.config.eval_seed)
        for index, instance in enumerate(islice(stream, runs)):
            result = sort_instance(model, instance)
            if result.ranks != reference_sort(instance.values):
                raise OracleMismatchError(
                    f"Run {index}: sorted output differs from the reference sort",
                    instance.values,
                )
            reports.append(result.report)
            rankings.append(result.ranks)

        pi_entropy = sampled_pi_entropy(rankings)
        mean = sum(r.total_comparisons for r in reports) / runs
        groups = len(model.tries)
        summary = BenchSummary(
            runs=runs,
            n=model.n,
            groups=groups,
            mean_comparisons=mean,
            mean_descent=sum(r.descent_comparisons for r in reports) / runs,
            mean_fallback=sum(r.fallback_comparisons for r in reports) / runs,
            mean_merge=sum(r.merge_comparisons for r in reports) / runs,
            pi_entropy=pi_entropy,
            sum_po_entropy=model.learned_entropy(),
            fitted_constant=fitted_constant(mean, pi_entropy.bits, model.n),
            fallback_rate=sum(r.fallback for r in reports) / (runs * groups),
            occupancy=bucket_occupancy_stats(reports),
            descent_violations=sum(r.descent_violations for r in reports),
        )
        _LOGGER.info(
            "Bench of %d runs: mean comparisons %.1f, c=%.2f, fallback rate %.3f",
            runs,
            mean,
            summary.fitted_constant,
            summary.fallback_rate,
        )
        return BenchResult(tuple(reports), summary)

    def diagnose(self, world: World, model: LearnedModel) -> DiagnosticReport:
        """Chernoff check per enumerable group, occupancy and entropy identity."""
        bench = self.bench(world, model)
        report = DiagnosticReport(occupancy=bench.summary.occupancy)
        budget = self.config.enumeration_budget
        for group in world.groups:
            if not group.source.is_discrete:
                report.skipped.append(f"group {group.group_id}: {group.source.kind}")
                continue
            distribution = enumerate_outcomes(
                group,
                model.vlist.landmarks,
                mu=world.mu,
                sigma=world.sigma,
                budget=budget,
            )
            probabilities = list(distribution.outcomes.values())
            report.groups.append(
                GroupDiagnostic(
                    group=group.group_id,
                    support=distribution.support,
                    bound=distribution.bound,
                    entropy=entropy_bits(probabilities),
                    chernoff=chernoff_diagnostic(
                        probabilities,
                        self.config.chernoff_runs,
                        model.samples,
                        seed=self.config.eval_seed + group.group_id,
                        min_probability=CHERNOFF_MIN_PROBABILITY,
                    ),
                )
            )
        if report.skipped:
            _LOGGER.warning(
                "Skipped exact diagnostics for non-enumerable groups: %s",
                report.skipped,
            )
        else:
            try:
                report.gap = entropy_gap(world, model.vlist, budget=budget)
            except EnumerationBudgetExceeded as err:
                _LOGGER.warning("Skipping entropy identity check: %s", err)
                report.skipped.append(str(err))
        return report
