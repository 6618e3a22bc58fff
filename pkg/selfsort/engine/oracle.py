"""Brute-force references kept separate from the fast paths."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction
import logging
import math

from ..const import DEFAULT_ENUMERATION_BUDGET, DEFAULT_PARTITION_ORACLE_CAP
from .exceptions import EnumerationBudgetExceeded, NotEnumerableError
from .instance_model import GroupModel
from .po_model import outcome_bound

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleConfig:
    """Size caps for the exhaustive oracles."""

    partition_cap: int = DEFAULT_PARTITION_ORACLE_CAP
    enumeration_budget: int = DEFAULT_ENUMERATION_BUDGET

    def __post_init__(self) -> None:
        """Validate caps."""
        if self.partition_cap < 1 or self.enumeration_budget < 1:
            raise ValueError(
                f"Oracle caps must be positive: partition_cap={self.partition_cap}, "
                f"enumeration_budget={self.enumeration_budget}"
            )


def reference_sort(values: Sequence[float]) -> tuple[int, ...]:
    """1-based ranks under the (value, index) order."""
    order = sorted(range(len(values)), key=lambda i: (values[i], i))
    ranks = [0] * len(values)
    for rank, index in enumerate(order, start=1):
        ranks[index] = rank
    return tuple(ranks)


def _monotone_subsets(seq: Sequence[float]) -> list[int]:
    """Bitmasks of every maximal non-decreasing or non-increasing subsequence."""
    found: set[int] = set()

    def extend(mask: int, last: int, rising: bool) -> None:
        grown = False
        for j in range(last + 1, len(seq)):
            if (seq[j] >= seq[last]) if rising else (seq[j] <= seq[last]):
                extend(mask | 1 << j, j, rising)
                grown = True
        if not grown:
            found.add(mask)

    for start in range(len(seq)):
        extend(1 << start, start, True)
        extend(1 << start, start, False)
    return [
        mask
        for mask in found
        if not any(other != mask and other & mask == mask for other in found)
    ]


def exhaustive_monotone_partition(
    seq: Sequence[float], cap: int = DEFAULT_PARTITION_ORACLE_CAP
) -> int:
    """True minimum number of monotone subsequences partitioning seq.

    Solved as a set cover rather than by labelling elements with chains:
    breadth-first over covered sets, always covering the first uncovered
    element with one maximal monotone subsequence. Any cover trims to a
    partition of the same size, since a subsequence of a monotone
    subsequence is monotone.
    """
    if len(seq) > cap:
        raise EnumerationBudgetExceeded(
            f"Sequence of length {len(seq)} exceeds oracle cap {cap}"
        )
    full = (1 << len(seq)) - 1
    if not full:
        return 0
    subsets = _monotone_subsets(seq)
    layer = {0}
    for count in range(1, len(seq) + 1):
        nxt = set()
        for covered in layer:
            first = (~covered & full) & -(~covered & full)
            for mask in subsets:
                if mask & first:
                    grown = covered | mask
                    if grown == full:
                        return count
                    nxt.add(grown)
        layer = nxt
    return len(seq)


def _naive_encode(
    values: Sequence[float], landmarks: Sequence[float]
) -> tuple[str, ...]:
    """Scan every landmark and earlier element for the largest smaller key."""
    items: list[tuple[tuple[float, int, int], str]] = [
        ((-math.inf, 0, 0), "V0"),
        *(((v, 0, r), f"V{r}") for r, v in enumerate(landmarks, start=1)),
    ]
    vector = []
    for t, x in enumerate(values):
        key = (x, 1, t)
        best = max((item for item in items if item[0] < key), key=lambda item: item[0])
        vector.append(best[1])
        items.append((key, f"x{t + 1}"))
    return tuple(vector)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Exact outcome probabilities keyed by rendered vector, e.g. ("V1", "x1")."""

    outcomes: dict[tuple[str, ...], Fraction] = field(default_factory=dict)
    bound: int | None = None

    @property
    def support(self) -> int:
        """Number of distinct outcomes."""
        return len(self.outcomes)

    @property
    def within_bound(self) -> bool:
        """Support does not exceed W."""
        return self.bound is None or self.support <= self.bound


def enumerate_outcomes(
    group: GroupModel,
    landmarks: Sequence[float],
    *,
    mu: int | None = None,
    sigma: int | None = None,
    budget: int = DEFAULT_ENUMERATION_BUDGET,
) -> OutcomeDistribution:
    """Exact outcome distribution of a discrete group, optionally checked against W."""
    if not group.source.is_discrete:
        raise NotEnumerableError(
            f"Group {group.group_id} source {group.source.kind} is not enumerable"
        )
    atoms = group.source.atoms
    if len(atoms) > budget:
        raise EnumerationBudgetExceeded(
            f"Group {group.group_id}: {len(atoms)} atoms exceed budget {budget}"
        )
    outcomes: dict[tuple[str, ...], Fraction] = {}
    for atom in atoms:
        vector = _naive_encode(group.member_values(float(atom)), landmarks)
        outcomes[vector] = outcomes.get(vector, Fraction(0)) + Fraction(1, len(atoms))

    bound = None
    if mu is not None and sigma is not None:
        bound = outcome_bound(group.size, len(landmarks), mu, sigma)
    distribution = OutcomeDistribution(outcomes, bound)
    if not distribution.within_bound:
        _LOGGER.warning(
            "Group %d: %d outcomes exceed W=%d",
            group.group_id,
            distribution.support,
            bound,
        )
    return distribution
