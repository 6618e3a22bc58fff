"""Operation phase: po_k per group, bucket distribution, bucket merges."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import UTC, datetime
from enum import StrEnum
import logging

from .exceptions import ModelMismatchError
from .instance_model import Instance
from .metrics import DescentRecord, RunReport
from .po_model import (
    DescentResult,
    LearnedModel,
    PoVector,
    decode_po,
    element_ref,
    landmark_ref,
    trie_descend,
)
from .vlist import VList, predecessor_counted

_LOGGER = logging.getLogger(__name__)

# (value, element index); ties between equal values fall to the index
Item = tuple[float, int]


class PoPath(StrEnum):
    """How a group outcome was obtained."""

    FAST = "fast"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class PoComputation:
    """A group outcome with the path and comparisons it took."""

    vector: PoVector
    path: PoPath
    comparisons: int
    descent: DescentResult | None = None


@dataclass
class BucketSet:
    """S_r: per-bucket lists of sorted single-group runs of element indices."""

    buckets: dict[int, list[tuple[int, ...]]] = field(default_factory=dict)

    def add(self, r: int, run: tuple[int, ...]) -> None:
        """Append one run to S_r."""
        self.buckets.setdefault(r, []).append(run)

    @property
    def total_elements(self) -> int:
        """Elements over all buckets."""
        return sum(len(run) for runs in self.buckets.values() for run in runs)

    def sublist_counts(self) -> dict[int, int]:
        """|S_r| for every nonempty bucket."""
        return {r: len(runs) for r, runs in sorted(self.buckets.items())}


@dataclass(frozen=True)
class SortResult:
    """Output ranks, sorted element indices and the run counters."""

    ranks: tuple[int, ...]
    order: tuple[int, ...]
    report: RunReport


def _before(a: Item, b: Item) -> bool:
    return a[0] < b[0] or (a[0] == b[0] and a[1] < b[1])


def _merge_pair(left: Sequence[Item], right: Sequence[Item]) -> tuple[list[Item], int]:
    merged: list[Item] = []
    comparisons = 0
    i = j = 0
    while i < len(left) and j < len(right):
        comparisons += 1
        if _before(left[i], right[j]):
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged, comparisons


def merge_bucket(sublists: Sequence[Sequence[Item]]) -> tuple[list[Item], int]:
    """Merge sorted runs pairwise in balanced rounds.

    Returns the merged run and the number of value comparisons.
    """
    runs = [list(run) for run in sublists if run]
    comparisons = 0
    while len(runs) > 1:
        paired = []
        for i in range(0, len(runs) - 1, 2):
            merged, spent = _merge_pair(runs[i], runs[i + 1])
            paired.append(merged)
            comparisons += spent
        if len(runs) % 2:
            paired.append(runs[-1])
        runs = paired
    return (runs[0] if runs else []), comparisons


def fallback_po(values: Sequence[float], v: VList) -> tuple[PoVector, int]:
    """Sort, binary-search each value into the V-list, assemble the vector."""
    ordered, comparisons = merge_bucket([[(x, p)] for p, x in enumerate(values)])
    buckets = []
    for x in values:
        r, spent = predecessor_counted(v, x)
        buckets.append(r)
        comparisons += spent

    vector: list[int] = [0] * len(values)
    # per bucket, earlier positions seen so far in sorted order, increasing
    stacks: dict[int, list[int]] = {}
    for _, p in ordered:
        r = buckets[p]
        stack = stacks.setdefault(r, [])
        while stack and stack[-1] > p:
            stack.pop()
        vector[p] = element_ref(stack[-1]) if stack else landmark_ref(r)
        stack.append(p)
    return tuple(vector), comparisons


def compute_po(model: LearnedModel, k: int, values: Sequence[float]) -> PoComputation:
    """Outcome of group k by trie descent, falling back on a miss."""
    descent = trie_descend(model.tries[k], values, model.vlist)
    if descent.hit:
        assert descent.vector is not None
        return PoComputation(descent.vector, PoPath.FAST, descent.comparisons, descent)
    vector, comparisons = fallback_po(values, model.vlist)
    _LOGGER.debug("Group %d missed at depth %d; using fallback", k, descent.depth)
    return PoComputation(
        vector, PoPath.FALLBACK, descent.comparisons + comparisons, descent
    )


def distribute(model: LearnedModel, vectors: Sequence[PoVector]) -> BucketSet:
    """Split every group's sorted order into per-bucket runs."""
    if len(vectors) != len(model.tries):
        raise ModelMismatchError(
            f"{len(vectors)} vectors for {len(model.tries)} groups"
        )
    bucket_set = BucketSet()
    for trie, vector in zip(model.tries, vectors):
        decoded = decode_po(vector, model.vlist)
        run: list[int] = []
        current = None
        for p in decoded.order:
            r = decoded.buckets[p]
            if run and r != current:
                bucket_set.add(current, tuple(run))  # type: ignore[arg-type]
                run = []
            current = r
            run.append(trie.members[p])
        if run:
            bucket_set.add(current, tuple(run))  # type: ignore[arg-type]
    return bucket_set


def sort_instance(model: LearnedModel, instance: Instance) -> SortResult:
    """Sort one instance and report comparisons by phase."""
    if instance.n != model.n:
        raise ModelMismatchError(
            f"Instance has {instance.n} elements, model expects {model.n}"
        )
    values = instance.values
    report = RunReport(n=model.n, groups=len(model.tries))

    vectors = []
    for k, trie in enumerate(model.tries):
        result = compute_po(model, k, [values[i] for i in trie.members])
        vectors.append(result.vector)
        if result.path is PoPath.FAST:
            assert result.descent is not None and result.descent.frequency is not None
            report.fast += 1
            report.descent_comparisons += result.comparisons
            report.descents.append(
                DescentRecord(
                    k, trie.size, result.descent.frequency, result.comparisons
                )
            )
        else:
            report.fallback += 1
            report.fallback_comparisons += result.comparisons

    order: list[int] = []
    bucket_set = distribute(model, vectors)
    for r in sorted(bucket_set.buckets):
        runs = bucket_set.buckets[r]
        merged, comparisons = merge_bucket(
            [[(values[i], i) for i in run] for run in runs]
        )
        report.merge_comparisons += comparisons
        report.bucket_sublists[r] = len(runs)
        report.bucket_elements[r] = len(merged)
        order.extend(i for _, i in merged)

    ranks = [0] * model.n
    for rank, element in enumerate(order, start=1):
        ranks[element] = rank
    report.finished = datetime.now(UTC)
    return SortResult(tuple(ranks), tuple(order), report)


def sort_values(model: LearnedModel, values: Sequence[float]) -> SortResult:
    """Sort a raw value sequence."""
    return sort_instance(model, Instance(tuple(values)))
