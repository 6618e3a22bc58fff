"""Hidden partition discovery through the monotone-partition statistic."""
from __future__ import annotations

from bisect import bisect_left, bisect_right, insort
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
import logging

import numpy as np

from ..const import DEFAULT_SEARCH_BUDGET, PARETO_FRONTIER_LIMIT
from .exceptions import LearningError, SearchBudgetExceeded
from .instance_model import Instance

_LOGGER = logging.getLogger(__name__)

# (non-decreasing chain tops, non-increasing chain tops), both sorted
_State = tuple[tuple[float, ...], tuple[float, ...]]


@dataclass(frozen=True)
class SampleMatrix:
    """m sampled instances as an m x n array."""

    values: np.ndarray

    def __post_init__(self) -> None:
        """Validate the matrix shape."""
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise LearningError(
                f"Sample matrix needs at least one row, got shape {self.values.shape}"
            )

    @classmethod
    def from_instances(cls, instances: Iterable[Instance]) -> SampleMatrix:
        """Stack instances row by row."""
        rows = [instance.values for instance in instances]
        if not rows:
            raise LearningError("No instances to build a sample matrix from")
        if len({len(row) for row in rows}) != 1:
            raise LearningError("Instances in a sample matrix differ in size")
        return cls(np.array(rows, dtype=float))

    @property
    def rows(self) -> int:
        """Number of sampled instances m."""
        return int(self.values.shape[0])

    @property
    def columns(self) -> int:
        """Number of elements n."""
        return int(self.values.shape[1])


@dataclass(frozen=True)
class PartitionResult:
    """Learned partition of element indices into groups."""

    groups: tuple[tuple[int, ...], ...]
    statistics: tuple[tuple[int, ...], ...] | None = None
    samples: int = 0
    threshold: int = 0

    def __post_init__(self) -> None:
        """Validate that groups are a disjoint cover."""
        covered = sorted(i for group in self.groups for i in group)
        if covered != list(range(len(covered))) or any(not g for g in self.groups):
            raise LearningError("Partition groups must be a disjoint cover of 0..n-1")

    @property
    def n(self) -> int:
        """Number of elements covered."""
        return sum(len(group) for group in self.groups)

    @property
    def largest_group(self) -> int:
        """n' = max group size."""
        return max(len(group) for group in self.groups)

    def group_of(self) -> dict[int, int]:
        """Map every element to its group position."""
        return {i: k for k, group in enumerate(self.groups) for i in group}


def partition_sample_count(mu: int, minimum: int | None = None) -> int:
    """Number of instances m used to learn the partition."""
    floor = 2 * (2 * mu + 2) ** 2 if minimum is None else minimum
    return max(mu**4, floor, 1)


def same_group_threshold(mu: int) -> int:
    """Largest statistic still declared same-group."""
    return 2 * mu + 1


class _Budget:
    def __init__(self, limit: int) -> None:
        self.limit = limit
        self.used = 0

    def spend(self, amount: int, best_upper_bound: int) -> None:
        self.used += amount
        if self.used > self.limit:
            raise SearchBudgetExceeded(
                f"Monotone partition search exceeded {self.limit} nodes "
                f"(best upper bound {best_upper_bound})",
                best_upper_bound,
            )


def _rsk_row_lengths(rows: list[list[float]]) -> list[int]:
    return [len(row) for row in rows]


def _rsk_insert(rows: list[list[float]], value: float) -> None:
    """Row-insert with weak rows: bump the leftmost entry strictly greater."""
    for row in rows:
        position = bisect_right(row, value)
        if position == len(row):
            row.append(value)
            return
        row[position], value = value, row[position]
    rows.append([value])


def _prefix_sums(lengths: list[int], limit: int) -> list[int]:
    sums = [0]
    for k in range(1, limit + 1):
        sums.append(sums[-1] + (lengths[k - 1] if k <= len(lengths) else 0))
    return sums


class _SuffixBounds:
    """Greene bounds on every suffix.

    covered_up[i][a] is the largest union of a non-decreasing subsequences of
    seq[i:], covered_down[i][b] the same for non-increasing ones.
    """

    def __init__(self, seq: Sequence[float], limit: int) -> None:
        m = len(seq)
        self.length = [m - i for i in range(m + 1)]
        self.covered_up: list[list[int]] = [[0] * (limit + 1)] * (m + 1)
        self.covered_down: list[list[int]] = [[0] * (limit + 1)] * (m + 1)
        up_rows: list[list[float]] = []
        down_rows: list[list[float]] = []
        for i in range(m - 1, -1, -1):
            # reading seq[i:] backwards: non-decreasing runs become weak rows of -x
            _rsk_insert(up_rows, -seq[i])
            _rsk_insert(down_rows, seq[i])
            self.covered_up[i] = _prefix_sums(_rsk_row_lengths(up_rows), limit)
            self.covered_down[i] = _prefix_sums(_rsk_row_lengths(down_rows), limit)

    def feasible(self, position: int, ups: int, downs: int, limit: int) -> bool:
        """Can seq[position:] fit into `limit` chains given open chains?"""
        need = self.length[position]
        if need == 0:
            return True
        up_cover = self.covered_up[position]
        down_cover = self.covered_down[position]
        return any(
            up_cover[a] + down_cover[limit - a] >= need
            for a in range(ups, limit - downs + 1)
        )

    def root_lower_bound(self, limit: int) -> int:
        """Smallest a + b with I_a + J_b >= m."""
        need = self.length[0]
        if need == 0:
            return 0
        for total in range(1, limit + 1):
            if any(
                self.covered_up[0][a] + self.covered_down[0][total - a] >= need
                for a in range(total + 1)
            ):
                return total
        return limit + 1


def _longest_monotone(seq: Sequence[float], *, decreasing: bool) -> list[int]:
    keys = [-x for x in seq] if decreasing else list(seq)
    tails: list[float] = []
    tail_index: list[int] = []
    parent = [-1] * len(keys)
    for i, key in enumerate(keys):
        position = bisect_right(tails, key)
        if position == len(tails):
            tails.append(key)
            tail_index.append(i)
        else:
            tails[position] = key
            tail_index[position] = i
        parent[i] = tail_index[position - 1] if position else -1
    chain = []
    cursor = tail_index[-1] if tail_index else -1
    while cursor != -1:
        chain.append(cursor)
        cursor = parent[cursor]
    return chain[::-1]


def _peeling_upper_bound(seq: Sequence[float]) -> int:
    remaining = list(seq)
    count = 0
    while remaining:
        up = _longest_monotone(remaining, decreasing=False)
        down = _longest_monotone(remaining, decreasing=True)
        taken = set(up if len(up) >= len(down) else down)
        remaining = [x for i, x in enumerate(remaining) if i not in taken]
        count += 1
    return count


def _greedy_upper_bound(seq: Sequence[float]) -> int:
    # chains are [top, direction] with direction 0 while a chain is a singleton
    chains: list[list[float]] = []
    for x in seq:
        best = None
        best_gap = None
        for chain in chains:
            top, direction = chain
            if (direction >= 0 and top <= x) or (direction <= 0 and top >= x):
                gap = abs(x - top) + (0.5 if direction == 0 else 0.0)
                if best_gap is None or gap < best_gap:
                    best, best_gap = chain, gap
        if best is None:
            chains.append([x, 0])
            continue
        if best[1] == 0 and x != best[0]:
            best[1] = 1 if x > best[0] else -1
        best[0] = x
    return len(chains)


def monotone_upper_bound(seq: Sequence[float]) -> int:
    """Cheap upper bound on the minimum monotone partition size."""
    if not seq:
        return 0
    return min(_greedy_upper_bound(seq), _peeling_upper_bound(seq))


def _successors(state: _State, x: float, limit: int) -> list[_State]:
    ups, downs = state
    if x in ups or x in downs:
        return [state]
    result: list[_State] = []
    open_slot = len(ups) + len(downs) < limit

    position = bisect_right(ups, x)
    if position:
        grown = list(ups)
        del grown[position - 1]
        insort(grown, x)
        result.append((tuple(grown), downs))
    elif open_slot:
        grown = list(ups)
        insort(grown, x)
        result.append((tuple(grown), downs))

    position = bisect_left(downs, x)
    if position < len(downs):
        shrunk = list(downs)
        del shrunk[position]
        insort(shrunk, x)
        result.append((ups, tuple(shrunk)))
    elif open_slot:
        shrunk = list(downs)
        insort(shrunk, x)
        result.append((ups, tuple(shrunk)))
    return result


def _dominates(a: _State, b: _State) -> bool:
    """True when every completion of b also completes a."""
    a_ups, a_downs = a
    b_ups, b_downs = b
    if len(a_ups) > len(b_ups) or len(a_downs) > len(b_downs):
        return False
    offset = len(b_ups) - len(a_ups)
    if any(top > b_ups[offset + i] for i, top in enumerate(a_ups)):
        return False
    return all(top >= b_downs[i] for i, top in enumerate(a_downs))


def _pareto(frontier: list[_State]) -> list[_State]:
    kept: list[_State] = []
    for state in sorted(frontier, key=lambda s: len(s[0]) + len(s[1])):
        if not any(_dominates(other, state) for other in kept):
            kept.append(state)
    return kept


def _search(
    seq: Sequence[float],
    limit: int,
    bounds: _SuffixBounds,
    budget: _Budget,
    best_upper_bound: int,
) -> bool:
    frontier: list[_State] = [((), ())]
    for position, x in enumerate(seq):
        expanded: set[_State] = set()
        for state in frontier:
            for nxt in _successors(state, x, limit):
                if bounds.feasible(position + 1, len(nxt[0]), len(nxt[1]), limit):
                    expanded.add(nxt)
        budget.spend(len(expanded) + 1, best_upper_bound)
        if not expanded:
            return False
        frontier = list(expanded)
        if len(frontier) <= PARETO_FRONTIER_LIMIT:
            frontier = _pareto(frontier)
    return True


def _check(seq: Sequence[float], d: int, budget: _Budget, upper: int) -> bool:
    bounds = _SuffixBounds(seq, d)
    if bounds.root_lower_bound(d) > d:
        return False
    return _search(seq, d, bounds, budget, upper)


def monotone_partition_at_most(
    seq: Sequence[float], d: int, *, budget: int = DEFAULT_SEARCH_BUDGET
) -> bool:
    """Decide whether seq splits into at most d monotone subsequences."""
    if d < 0:
        raise ValueError(f"d must be non-negative, got {d}")
    values = [float(x) for x in seq]
    if not values:
        return True
    if d == 0:
        return False
    upper = monotone_upper_bound(values)
    if upper <= d:
        return True
    return _check(values, d, _Budget(budget), upper)


def monotone_partition_size(
    seq: Sequence[float], *, budget: int = DEFAULT_SEARCH_BUDGET
) -> int:
    """Exact minimum number of monotone subsequences partitioning seq."""
    values = [float(x) for x in seq]
    if not values:
        return 0
    upper = monotone_upper_bound(values)
    lower = _SuffixBounds(values, upper).root_lower_bound(upper)
    tracker = _Budget(budget)
    for d in range(max(1, lower), upper):
        if _check(values, d, tracker, upper):
            return d
    return upper


def same_group_statistic(
    samples: SampleMatrix, i: int, j: int, *, budget: int = DEFAULT_SEARCH_BUDGET
) -> int:
    """D of column j read in the order that sorts column i."""
    if i == j:
        raise ValueError(f"Statistic needs two distinct columns, got {i} twice")
    return monotone_partition_size(_induced_sequence(samples, i, j), budget=budget)


def _induced_sequence(samples: SampleMatrix, i: int, j: int) -> list[float]:
    order = np.argsort(samples.values[:, i], kind="stable")
    return samples.values[order, j].tolist()


class _DisjointSet:
    def __init__(self, size: int) -> None:
        self.parent = list(range(size))

    def find(self, item: int) -> int:
        while self.parent[item] != item:
            self.parent[item] = self.parent[self.parent[item]]
            item = self.parent[item]
        return item

    def union(self, a: int, b: int) -> None:
        root_a, root_b = self.find(a), self.find(b)
        if root_a != root_b:
            self.parent[max(root_a, root_b)] = min(root_a, root_b)


def learn_partition(
    samples: SampleMatrix,
    mu: int,
    *,
    record_statistics: bool = False,
    budget: int = DEFAULT_SEARCH_BUDGET,
) -> PartitionResult:
    """Merge every pair whose statistic stays within 2*mu+1.

    With record_statistics the full pairwise matrix is computed (entry -1 on
    the diagonal); otherwise pairs already joined are skipped.
    """
    n = samples.columns
    threshold = same_group_threshold(mu)
    sets = _DisjointSet(n)
    matrix = [[-1] * n for _ in range(n)] if record_statistics else None

    for i in range(n):
        for j in range(i + 1, n):
            if matrix is None and sets.find(i) == sets.find(j):
                continue
            try:
                if matrix is not None:
                    statistic = same_group_statistic(samples, i, j, budget=budget)
                    matrix[i][j] = matrix[j][i] = statistic
                    same = statistic <= threshold
                else:
                    same = monotone_partition_at_most(
                        _induced_sequence(samples, i, j), threshold, budget=budget
                    )
            except SearchBudgetExceeded as err:
                # undecided pairs stay apart
                _LOGGER.warning("Columns %d,%d: %s; kept apart", i, j, err)
                if matrix is not None:
                    matrix[i][j] = matrix[j][i] = err.best_upper_bound
                same = False
            if same:
                sets.union(i, j)

    members: dict[int, list[int]] = {}
    for i in range(n):
        members.setdefault(sets.find(i), []).append(i)
    groups = tuple(tuple(group) for group in sorted(members.values()))

    _LOGGER.info(
        "Learned partition of %d elements into %d groups from %d samples",
        n,
        len(groups),
        samples.rows,
    )
    return PartitionResult(
        groups=groups,
        statistics=tuple(tuple(row) for row in matrix) if matrix else None,
        samples=samples.rows,
        threshold=threshold,
    )
