"""Entropy estimates, run counters and statistical diagnostics."""
from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Iterable, Sequence
from dataclasses import dataclass, field
from datetime import UTC, datetime
from fractions import Fraction
from itertools import product
import logging
import math

import numpy as np

from ..const import (
    BINOMIAL_MARGIN,
    DEFAULT_ENUMERATION_BUDGET,
    DESCENT_OFFSET,
    DESCENT_SLOPE,
)
from .exceptions import EnumerationBudgetExceeded, NotEnumerableError
from .instance_model import GroupModel, World
from .po_model import PoVector, encode_po
from .vlist import VList

_LOGGER = logging.getLogger(__name__)

# Fewer samples than this multiple of the support flags an estimate as small-sample
SMALL_SAMPLE_FACTOR = 5

MIN_CHERNOFF_RUNS = 100


@dataclass(frozen=True)
class EntropyEstimate:
    """Plug-in entropy in bits."""

    bits: float
    support: int
    samples: int
    standard_error: float
    small_sample: bool

    def as_dict(self) -> dict[str, float | int | bool]:
        """Serialize for reports."""
        return {
            "bits": self.bits,
            "support": self.support,
            "samples": self.samples,
            "standard_error": self.standard_error,
            "small_sample": self.small_sample,
        }


def plugin_entropy(frequencies: Iterable[int]) -> EntropyEstimate:
    """H = sum chi_i/T log2(T/chi_i) over positive counts."""
    counts = [int(c) for c in frequencies]
    if any(c < 0 for c in counts):
        raise ValueError("Counts must be non-negative")
    positive = [c for c in counts if c > 0]
    if not positive:
        raise ValueError("At least one count must be positive")
    total = sum(positive)
    bits = sum(c / total * math.log2(total / c) for c in positive)
    second = sum(c / total * math.log2(total / c) ** 2 for c in positive)
    spread = max(0.0, second - bits * bits)
    return EntropyEstimate(
        bits=bits,
        support=len(positive),
        samples=total,
        standard_error=math.sqrt(spread / total),
        small_sample=total < SMALL_SAMPLE_FACTOR * len(positive),
    )


def entropy_bits(probabilities: Iterable[Fraction | float]) -> float:
    """Entropy of an exact distribution in bits."""
    return sum(float(p) * math.log2(1 / float(p)) for p in probabilities if p > 0)


def exact_po_distribution(
    group: GroupModel, v: VList, *, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> dict[PoVector, Fraction]:
    """Exact p_i per outcome by enumerating every atom of a discrete source."""
    if not group.source.is_discrete:
        raise NotEnumerableError(
            f"Group {group.group_id} source {group.source.kind} is not enumerable"
        )
    atoms = group.source.atoms
    if len(atoms) > budget:
        raise EnumerationBudgetExceeded(
            f"Group {group.group_id}: {len(atoms)} atoms exceed budget {budget}"
        )
    weight = Fraction(1, len(atoms))
    distribution: dict[PoVector, Fraction] = {}
    for atom in atoms:
        vector = encode_po(group.member_values(float(atom)), v)
        distribution[vector] = distribution.get(vector, Fraction(0)) + weight
    return distribution


def exact_po_entropy(
    group: GroupModel, v: VList, *, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> float:
    """H(po_k) in bits from exhaustive atom enumeration."""
    return entropy_bits(exact_po_distribution(group, v, budget=budget).values())


def _joint_size(world: World, budget: int) -> int:
    for group in world.groups:
        if not group.source.is_discrete:
            raise NotEnumerableError(
                f"Group {group.group_id} source {group.source.kind} is not enumerable"
            )
    size = math.prod(len(group.source.atoms) for group in world.groups)
    if size > budget:
        raise EnumerationBudgetExceeded(
            f"{size} joint atoms exceed enumeration budget {budget}"
        )
    return size


def exact_pi_distribution(
    world: World, *, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> dict[tuple[int, ...], Fraction]:
    """Exact distribution of the output ranking over all joint atoms."""
    size = _joint_size(world, budget)
    tables = [
        [group.member_values(float(atom)) for atom in group.source.atoms]
        for group in world.groups
    ]
    counts: Counter[tuple[int, ...]] = Counter()
    values = [0.0] * world.n
    for choice in product(*(range(len(table)) for table in tables)):
        for group, table, pick in zip(world.groups, tables, choice):
            for element, value in zip(group.members, table[pick]):
                values[element] = value
        order = sorted(range(world.n), key=lambda i: (values[i], i))
        ranks = [0] * world.n
        for rank, element in enumerate(order, start=1):
            ranks[element] = rank
        counts[tuple(ranks)] += 1
    return {ranks: Fraction(c, size) for ranks, c in counts.items()}


def exact_pi_entropy(
    world: World, *, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> float:
    """H(pi) in bits over the product space of group atoms."""
    return entropy_bits(exact_pi_distribution(world, budget=budget).values())


def sampled_pi_entropy(rankings: Iterable[Hashable]) -> EntropyEstimate:
    """Plug-in H(pi) from observed outputs."""
    return plugin_entropy(Counter(rankings).values())


@dataclass(frozen=True)
class EntropyGap:
    """Sum of group outcome entropies against the output entropy."""

    group_entropies: tuple[float, ...]
    pi_entropy: float
    n: int

    @property
    def sum_po_entropy(self) -> float:
        """Sum over groups of H(po_k)."""
        return sum(self.group_entropies)

    @property
    def gap(self) -> float:
        """Sum H(po_k) - H(pi)."""
        return self.sum_po_entropy - self.pi_entropy

    @property
    def constant(self) -> float:
        """|gap| / n."""
        return abs(self.gap) / self.n if self.n else 0.0

    def as_dict(self) -> dict[str, object]:
        """Serialize for reports."""
        return {
            "group_entropies": list(self.group_entropies),
            "sum_po_entropy": self.sum_po_entropy,
            "pi_entropy": self.pi_entropy,
            "gap": self.gap,
            "constant": self.constant,
        }


def entropy_gap(
    world: World, v: VList, *, budget: int = DEFAULT_ENUMERATION_BUDGET
) -> EntropyGap:
    """Exact sum H(po_k) and H(pi) on an enumerable world."""
    return EntropyGap(
        group_entropies=tuple(
            exact_po_entropy(group, v, budget=budget) for group in world.groups
        ),
        pi_entropy=exact_pi_entropy(world, budget=budget),
        n=world.n,
    )


def descent_bound(n_k: int, frequency: Fraction | float) -> float:
    """Allowed boundary comparisons for a descent reaching a leaf of weight q."""
    return DESCENT_SLOPE * (n_k + math.log2(1 / float(frequency))) + DESCENT_OFFSET


def unseen_mass_bound(outcomes: int, samples: int) -> float:
    """W / (T + 1) scale bound on the probability of an unsampled outcome."""
    return min(1.0, outcomes / (samples + 1))


def binomial_margin(p: float, runs: int) -> float:
    """Three binomial standard deviations for a rate measured over runs."""
    return BINOMIAL_MARGIN * math.sqrt(max(p * (1 - p), 0.0) / runs)


@dataclass(frozen=True)
class DescentRecord:
    """One FAST-path trie descent."""

    group: int
    size: int
    frequency: Fraction
    comparisons: int

    @property
    def bound(self) -> float:
        """Allowed comparisons for this descent."""
        return descent_bound(self.size, self.frequency)

    @property
    def within_bound(self) -> bool:
        """True when the descent respects its bound."""
        return self.comparisons <= self.bound


@dataclass
class RunReport:
    """Counters of one operation-phase sort."""

    n: int
    groups: int
    descent_comparisons: int = 0
    fallback_comparisons: int = 0
    merge_comparisons: int = 0
    fast: int = 0
    fallback: int = 0
    bucket_sublists: dict[int, int] = field(default_factory=dict)
    bucket_elements: dict[int, int] = field(default_factory=dict)
    descents: list[DescentRecord] = field(default_factory=list)
    started: datetime = field(default_factory=lambda: datetime.now(UTC), compare=False)
    finished: datetime | None = field(default=None, compare=False)

    @property
    def total_comparisons(self) -> int:
        """Value comparisons over all phases."""
        return (
            self.descent_comparisons
            + self.fallback_comparisons
            + self.merge_comparisons
        )

    @property
    def descent_violations(self) -> int:
        """FAST descents above their comparison bound."""
        return sum(1 for record in self.descents if not record.within_bound)

    @property
    def mean_sublists(self) -> float:
        """Mean |S_r| over nonempty buckets."""
        if not self.bucket_sublists:
            return 0.0
        return sum(self.bucket_sublists.values()) / len(self.bucket_sublists)

    def consistency_errors(self) -> list[str]:
        """Sum checks between the counters."""
        errors = []
        counters = {
            "descent_comparisons": self.descent_comparisons,
            "fallback_comparisons": self.fallback_comparisons,
            "merge_comparisons": self.merge_comparisons,
            "fast": self.fast,
            "fallback": self.fallback,
        }
        errors.extend(f"{name} is negative" for name, v in counters.items() if v < 0)
        if self.fast + self.fallback != self.groups:
            errors.append(
                f"fast {self.fast} + fallback {self.fallback} != groups {self.groups}"
            )
        if len(self.descents) != self.fast:
            errors.append(f"{len(self.descents)} descent records for {self.fast} fast")
        if sum(r.comparisons for r in self.descents) != self.descent_comparisons:
            errors.append("descent records do not sum to descent_comparisons")
        if sum(self.bucket_elements.values()) != self.n:
            errors.append(
                f"bucket elements sum to {sum(self.bucket_elements.values())}, "
                f"not {self.n}"
            )
        if set(self.bucket_elements) != set(self.bucket_sublists):
            errors.append("bucket element and sublist keys differ")
        return errors

    def as_row(self) -> dict[str, int | float]:
        """Flat CSV row; timestamps are left out so reports stay reproducible."""
        return {
            "n": self.n,
            "groups": self.groups,
            "comparisons": self.total_comparisons,
            "descent_comparisons": self.descent_comparisons,
            "fallback_comparisons": self.fallback_comparisons,
            "merge_comparisons": self.merge_comparisons,
            "fast": self.fast,
            "fallback": self.fallback,
            "nonempty_buckets": len(self.bucket_sublists),
            "mean_sublists": self.mean_sublists,
            "max_sublists": max(self.bucket_sublists.values(), default=0),
            "descent_violations": self.descent_violations,
        }


@dataclass(frozen=True)
class ChernoffRow:
    """Measured rate of q_i <= p_i/2 for one outcome."""

    outcome: int
    probability: float
    bound: float
    rate: float
    margin: float

    @property
    def violated(self) -> bool:
        """Rate above bound plus margin."""
        return self.rate > self.bound + self.margin


@dataclass(frozen=True)
class ChernoffReport:
    """Chernoff check across repeated learning runs."""

    runs: int
    samples: int
    rows: tuple[ChernoffRow, ...]

    @property
    def violations(self) -> int:
        """Outcomes whose measured rate exceeds the allowance."""
        return sum(1 for row in self.rows if row.violated)

    def as_dict(self) -> dict[str, object]:
        """Serialize for reports."""
        return {
            "runs": self.runs,
            "samples": self.samples,
            "violations": self.violations,
            "rows": [
                {
                    "outcome": row.outcome,
                    "probability": row.probability,
                    "bound": row.bound,
                    "rate": row.rate,
                    "margin": row.margin,
                    "violated": row.violated,
                }
                for row in self.rows
            ],
        }


def chernoff_diagnostic(
    probabilities: Sequence[Fraction | float],
    runs: int,
    samples: int,
    *,
    seed: int,
    min_probability: float = 0.0,
) -> ChernoffReport:
    """Rate of q_i <= p_i/2 over R simulated learning runs of T samples each.

    Runs sample the exact outcome law directly: each run is one multinomial
    draw of size T from probabilities, which has the same distribution as
    the outcome counts of learn_po_distribution on T fresh instances.
    """
    if runs < MIN_CHERNOFF_RUNS:
        raise ValueError(
            f"Chernoff diagnostic needs R >= {MIN_CHERNOFF_RUNS}, got {runs}"
        )
    if samples < 1:
        raise ValueError(f"T must be positive, got {samples}")
    p = np.array([float(x) for x in probabilities])
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(samples, p, size=runs)
    rows = []
    for i, probability in enumerate(p):
        if probability < min_probability:
            continue
        rate = float(np.mean(2 * counts[:, i] <= probability * samples))
        bound = math.exp(-probability * samples / 8)
        rows.append(
            ChernoffRow(
                outcome=i,
                probability=float(probability),
                bound=bound,
                rate=rate,
                margin=binomial_margin(bound, runs),
            )
        )
    report = ChernoffReport(runs=runs, samples=samples, rows=tuple(rows))
    if report.violations:
        _LOGGER.warning("Chernoff diagnostic: %d violations", report.violations)
    return report


@dataclass(frozen=True)
class OccupancyStats:
    """Bucket occupancy |S_r| aggregated over runs."""

    runs: int
    per_bucket_mean: dict[int, float]
    global_mean: float
    max_sublists: int

    def as_dict(self) -> dict[str, object]:
        """Serialize for reports."""
        return {
            "runs": self.runs,
            "global_mean": self.global_mean,
            "max_sublists": self.max_sublists,
            "per_bucket_mean": {
                str(r): m for r, m in sorted(self.per_bucket_mean.items())
            },
        }


def bucket_occupancy_stats(reports: Sequence[RunReport]) -> OccupancyStats:
    """Mean number of sublists per nonempty bucket."""
    if not reports:
        raise ValueError("Occupancy needs at least one report")
    totals: dict[int, int] = {}
    seen: dict[int, int] = {}
    for report in reports:
        for r, count in report.bucket_sublists.items():
            totals[r] = totals.get(r, 0) + count
            seen[r] = seen.get(r, 0) + 1
    pooled = sum(seen.values())
    return OccupancyStats(
        runs=len(reports),
        per_bucket_mean={r: totals[r] / seen[r] for r in sorted(totals)},
        global_mean=sum(totals.values()) / pooled if pooled else 0.0,
        max_sublists=max(
            (c for report in reports for c in report.bucket_sublists.values()),
            default=0,
        ),
    )


def fitted_constant(mean_comparisons: float, entropy: float, n: int) -> float:
    """c such that comparisons = c (H + n)."""
    return mean_comparisons / (entropy + n)
