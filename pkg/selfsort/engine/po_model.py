"""Group outcomes po_k, their vector encoding and the weighted outcome trie.

A PoVector entry is an int reference: r >= 0 names landmark V_r, a negative
value -(s + 1) names the earlier group element at position s.
"""
from __future__ import annotations

from bisect import bisect_right, insort
from collections import Counter
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
import logging
import math
import re

from .exceptions import (
    InsufficientInstancesError,
    LearningError,
    ModelMismatchError,
    PoVectorError,
)
from .instance_model import Instance
from .partition import PartitionResult
from .vlist import VList, predecessor

_LOGGER = logging.getLogger(__name__)

PoVector = tuple[int, ...]

# Child weights are scaled so unseen gaps (weight 1) barely perturb code lengths
_CHILD_SCALE = 1 << 20

_REF_PATTERN = re.compile(r"^(V|x)(\d+)$")


def landmark_ref(r: int) -> int:
    """Reference to landmark V_r."""
    return r


def element_ref(s: int) -> int:
    """Reference to the group element at 0-based position s."""
    return -(s + 1)


def is_landmark(ref: int) -> bool:
    """True for landmark references."""
    return ref >= 0


def element_of(ref: int) -> int:
    """Position named by an element reference."""
    return -ref - 1


def format_ref(ref: int) -> str:
    """Render as "V<r>" or "x<s>" with 1-based element numbers."""
    return f"V{ref}" if is_landmark(ref) else f"x{element_of(ref) + 1}"


def parse_ref(text: str) -> int:
    """Inverse of format_ref."""
    match = _REF_PATTERN.match(text)
    if not match:
        raise PoVectorError(f"Malformed reference: {text!r}")
    kind, number = match.group(1), int(match.group(2))
    if kind == "V":
        return landmark_ref(number)
    if number < 1:
        raise PoVectorError(f"Element references are 1-based: {text!r}")
    return element_ref(number - 1)


def format_vector(vector: PoVector) -> str:
    """Human readable vector such as "(V1, x1)"."""
    return "(" + ", ".join(format_ref(ref) for ref in vector) + ")"


def encode_po(values: Sequence[float], v: VList) -> PoVector:
    """Predecessor of each x_t among the landmarks and x_1..x_{t-1}.

    Ties follow (value, landmark before element, element index).
    """
    earlier: list[tuple[float, int]] = []
    refs = []
    for t, x in enumerate(values):
        r = predecessor(v, x)
        position = bisect_right(earlier, (x, t))
        if position and earlier[position - 1][0] >= v.value(r):
            refs.append(element_ref(earlier[position - 1][1]))
        else:
            refs.append(landmark_ref(r))
        insort(earlier, (x, t))
    return tuple(refs)


class _MergedList:
    """Merged order of landmarks and a growing prefix of group elements."""

    def __init__(self, n_landmarks: int) -> None:
        self.n_landmarks = n_landmarks
        self.head: dict[int, int] = {}
        self.next: list[int | None] = []
        self.bucket: list[int] = []

    def check(self, ref: int) -> None:
        t = len(self.bucket)
        if is_landmark(ref):
            if ref > self.n_landmarks:
                raise PoVectorError(
                    f"Entry {t + 1} names V{ref} beyond V{self.n_landmarks}"
                )
        elif element_of(ref) >= t:
            raise PoVectorError(
                f"Entry {t + 1} names x{element_of(ref) + 1}, not an earlier element"
            )

    def insert(self, ref: int) -> None:
        t = len(self.bucket)
        if is_landmark(ref):
            self.next.append(self.head.get(ref))
            self.head[ref] = t
            self.bucket.append(ref)
        else:
            s = element_of(ref)
            self.next.append(self.next[s])
            self.next[s] = t
            self.bucket.append(self.bucket[s])

    def undo(self, ref: int) -> None:
        following = self.next.pop()
        self.bucket.pop()
        if is_landmark(ref):
            if following is None:
                del self.head[ref]
            else:
                self.head[ref] = following
        else:
            self.next[element_of(ref)] = following

    def successor(self, ref: int) -> int:
        """Item right after ref in merged order."""
        if is_landmark(ref):
            first = self.head.get(ref)
            return landmark_ref(ref + 1) if first is None else element_ref(first)
        following = self.next[element_of(ref)]
        if following is None:
            return landmark_ref(self.bucket[element_of(ref)] + 1)
        return element_ref(following)

    def position_key(self, ref: int) -> tuple[int, int]:
        if is_landmark(ref):
            return (ref, -1)
        s = element_of(ref)
        rank, cursor = 0, self.head[self.bucket[s]]
        while cursor != s:
            rank += 1
            cursor = self.next[cursor]  # type: ignore[assignment]
        return (self.bucket[s], rank)

    def order(self) -> list[int]:
        positions = []
        for r in sorted(self.head):
            cursor: int | None = self.head[r]
            while cursor is not None:
                positions.append(cursor)
                cursor = self.next[cursor]
        return positions


@dataclass(frozen=True)
class PoDecoding:
    """Bucket of every group element and the group's sorted positions."""

    buckets: tuple[int, ...]
    order: tuple[int, ...]


def decode_po(vector: PoVector, v: VList) -> PoDecoding:
    """Rebuild buckets and within-group order from a PoVector."""
    merged = _MergedList(v.n)
    for ref in vector:
        if not isinstance(ref, int):
            raise PoVectorError(f"Vector entries must be ints, got {ref!r}")
        merged.check(ref)
        merged.insert(ref)
    return PoDecoding(tuple(merged.bucket), tuple(merged.order()))


@dataclass(frozen=True, slots=True)
class _Decision:
    """Internal node of a child search tree: compare against one boundary."""

    boundary: int
    left: _Decision | PoTrieNode | None
    right: _Decision | PoTrieNode | None


@dataclass(eq=False)
class PoTrieNode:
    """Trie node; count is the number of samples through it."""

    ref: int | None
    count: int = 0
    children: dict[int, PoTrieNode] = field(default_factory=dict)
    ordered: tuple[PoTrieNode, ...] = ()
    leaf_id: int | None = None
    search: _Decision | PoTrieNode | None = None


def _code_length(weight: int, total: int) -> int:
    exponent = 0
    while weight << exponent < total:
        exponent += 1
    return exponent + 1


def _alphabetic_tree(
    intervals: list[PoTrieNode | None], boundaries: list[int], weights: list[int]
) -> _Decision | PoTrieNode | None:
    """Gilbert-Moore alphabetic code tree over consecutive intervals."""
    total = sum(weights)
    lengths, codes = [], []
    prefix = 0
    for weight in weights:
        length = _code_length(weight, total)
        lengths.append(length)
        codes.append(((2 * prefix + weight) << length) // (2 * total))
        prefix += weight

    def split(lo: int, hi: int, bit: int) -> _Decision | PoTrieNode | None:
        while hi - lo > 1:
            bits = [(codes[k] >> (lengths[k] - 1 - bit)) & 1 for k in range(lo, hi)]
            if 0 in bits and 1 in bits:
                mid = lo + bits.index(1)
                return _Decision(
                    boundaries[mid - 1],
                    split(lo, mid, bit + 1),
                    split(mid, hi, bit + 1),
                )
            bit += 1
        return intervals[lo]

    return split(0, len(intervals), 0)


def _child_search(
    children: Sequence[PoTrieNode], merged: _MergedList
) -> _Decision | PoTrieNode | None:
    """Search structure over the gaps of the merged order.

    Children occupy the gaps after their items; gaps between them are unseen
    outcomes. Sentinel boundaries are never compared against.
    """
    intervals: list[PoTrieNode | None] = []
    boundaries: list[int] = []
    pending: int | None = None
    for child in children:
        assert child.ref is not None
        if child.ref == landmark_ref(0):
            intervals.append(child)
        elif pending is None:
            intervals.extend([None, child])
            boundaries.append(child.ref)
        elif pending == child.ref:
            boundaries.append(child.ref)
            intervals.append(child)
        else:
            boundaries.extend([pending, child.ref])
            intervals.extend([None, child])
        pending = merged.successor(child.ref)
    if pending is not None and pending != landmark_ref(merged.n_landmarks + 1):
        boundaries.append(pending)
        intervals.append(None)
    weights = [1 if item is None else item.count * _CHILD_SCALE for item in intervals]
    return _alphabetic_tree(intervals, boundaries, weights)


@dataclass(frozen=True)
class DescentResult:
    """Outcome of one trie descent."""

    hit: bool
    vector: PoVector | None
    depth: int
    step_comparisons: tuple[int, ...]
    leaf_id: int | None = None
    frequency: Fraction | None = None

    @property
    def comparisons(self) -> int:
        """Total boundary comparisons."""
        return sum(self.step_comparisons)


class PoTrie:
    """Weighted trie of sampled PoVectors for one group."""

    def __init__(
        self,
        members: Sequence[int],
        n_landmarks: int,
        counts: Mapping[PoVector, int],
    ) -> None:
        self.members = tuple(members)
        self.n_landmarks = n_landmarks
        self.root = PoTrieNode(ref=None)
        self.leaves = 0
        for vector, count in counts.items():
            self._insert(tuple(vector), count)
        if self.root.count < 1:
            raise LearningError("Cannot build an outcome trie from zero samples")
        self._finalize(self.root, _MergedList(n_landmarks), 0)

    @property
    def size(self) -> int:
        """Group size n_k."""
        return len(self.members)

    @property
    def samples(self) -> int:
        """T: samples the trie was built from."""
        return self.root.count

    def _insert(self, vector: PoVector, count: int) -> None:
        if len(vector) != self.size:
            raise PoVectorError(
                f"Vector of length {len(vector)} for a group of {self.size}"
            )
        if count < 1:
            raise PoVectorError(f"Outcome count must be positive, got {count}")
        merged = _MergedList(self.n_landmarks)
        node = self.root
        node.count += count
        for ref in vector:
            merged.check(ref)
            merged.insert(ref)
            child = node.children.get(ref)
            if child is None:
                child = node.children[ref] = PoTrieNode(ref=ref)
            child.count += count
            node = child

    def _finalize(self, node: PoTrieNode, merged: _MergedList, depth: int) -> None:
        if depth == self.size:
            node.leaf_id = self.leaves
            self.leaves += 1
            return
        node.ordered = tuple(
            node.children[ref]
            for ref in sorted(node.children, key=merged.position_key)
        )
        node.search = _child_search(node.ordered, merged)
        for child in node.ordered:
            assert child.ref is not None
            merged.insert(child.ref)
            self._finalize(child, merged, depth + 1)
            merged.undo(child.ref)

    def weight(self, node: PoTrieNode) -> Fraction:
        """Exact node weight count / T."""
        return Fraction(node.count, self.samples)

    def paths(self) -> Iterator[tuple[PoVector, int]]:
        """Every sampled vector with its count, in leaf order."""
        stack: list[tuple[PoTrieNode, PoVector]] = [(self.root, ())]
        while stack:
            node, prefix = stack.pop()
            if not node.ordered and len(prefix) == self.size:
                yield prefix, node.count
                continue
            for child in reversed(node.ordered):
                assert child.ref is not None
                stack.append((child, (*prefix, child.ref)))

    def counts(self) -> dict[PoVector, int]:
        """Sample count chi_i per outcome."""
        return dict(self.paths())

    def frequencies(self) -> dict[PoVector, Fraction]:
        """Leaf weights q_i = chi_i / T."""
        return {vector: Fraction(c, self.samples) for vector, c in self.paths()}

    def weights_consistent(self) -> bool:
        """Every internal node count equals the sum of its children."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.children:
                if node.count != sum(c.count for c in node.children.values()):
                    return False
                stack.extend(node.children.values())
        return True

    def entropy(self) -> float:
        """Plug-in entropy of the leaf frequencies in bits."""
        total = self.samples
        return sum(c / total * math.log2(total / c) for _, c in self.paths())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoTrie):
            return NotImplemented
        return (
            self.members == other.members
            and self.n_landmarks == other.n_landmarks
            and self.counts() == other.counts()
        )

    __hash__ = None  # type: ignore[assignment]


def trie_descend(trie: PoTrie, values: Sequence[float], v: VList) -> DescentResult:
    """Locate the outcome of values by biased search from the root."""
    if len(values) != trie.size:
        raise ModelMismatchError(
            f"Descent with {len(values)} values into a trie for {trie.size}"
        )
    node = trie.root
    steps: list[int] = []
    refs: list[int] = []
    for t in range(trie.size):
        x = values[t]
        probe = node.search
        cost = 0
        while isinstance(probe, _Decision):
            cost += 1
            ref = probe.boundary
            boundary = v.value(ref) if is_landmark(ref) else values[element_of(ref)]
            probe = probe.right if boundary <= x else probe.left
        steps.append(cost)
        if probe is None:
            return DescentResult(
                hit=False, vector=None, depth=t, step_comparisons=tuple(steps)
            )
        node = probe
        assert node.ref is not None
        refs.append(node.ref)
    return DescentResult(
        hit=True,
        vector=tuple(refs),
        depth=trie.size,
        step_comparisons=tuple(steps),
        leaf_id=node.leaf_id,
        frequency=trie.weight(node),
    )


def required_samples(n: int, n_prime: int, mu: int, sigma: int) -> int:
    """T = n'(n(mu+1) + n' sigma) log2 n, with log2 n at least 1."""
    outcomes = n_prime * (n * (mu + 1) + n_prime * sigma)
    return math.ceil(outcomes * max(1.0, math.log2(n)))


def scaled_samples(required: int, rho: float) -> int:
    """ceil(rho * T), at least 1."""
    if not 0 < rho <= 1:
        raise LearningError(f"rho must lie in (0, 1], got {rho}")
    return max(1, math.ceil(rho * required))


def outcome_bound(n_k: int, n: int, mu: int, sigma: int) -> int:
    """W = n_k n (mu+1) + n_k^2 sigma, never below the slab count.

    Slabs are bounded by curve-landmark crossings plus pairwise intersections
    plus one; this only exceeds W when sigma = 0.
    """
    crossings = n_k * n * (mu + 1) + sigma * n_k * (n_k - 1) // 2
    return max(n_k * n * (mu + 1) + n_k * n_k * sigma, crossings + 1)


@dataclass(frozen=True)
class LearnedModel:
    """Everything the operation phase needs."""

    n: int
    mu: int
    sigma: int
    partition: PartitionResult
    vlist: VList
    tries: tuple[PoTrie, ...]
    samples: int
    required: int
    rho: float = 1.0
    provenance: dict[str, int | float | str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate that the parts agree on n and the groups."""
        if self.vlist.n != self.n or self.partition.n != self.n:
            raise ModelMismatchError(
                f"Model parts disagree on n: vlist {self.vlist.n}, "
                f"partition {self.partition.n}, model {self.n}"
            )
        if tuple(t.members for t in self.tries) != self.partition.groups:
            raise ModelMismatchError("Trie members do not match partition groups")

    @property
    def n_prime(self) -> int:
        """Largest group size."""
        return self.partition.largest_group

    def outcome_bound(self, k: int) -> int:
        """W for group k."""
        return outcome_bound(self.tries[k].size, self.n, self.mu, self.sigma)

    def learned_entropy(self) -> float:
        """Sum over groups of the plug-in outcome entropy."""
        return sum(trie.entropy() for trie in self.tries)


def learn_po_distribution(
    instances: Iterable[Instance],
    partition: PartitionResult,
    v: VList,
    samples: int,
    *,
    mu: int,
    sigma: int,
    rho: float = 1.0,
    required: int | None = None,
    provenance: Mapping[str, int | float | str] | None = None,
) -> LearnedModel:
    """Encode T sampled outcomes per group and build the weighted tries."""
    if samples < 1:
        raise LearningError(f"T must be at least 1, got {samples}")
    counters: list[Counter[PoVector]] = [Counter() for _ in partition.groups]
    seen = 0
    for instance in instances:
        if instance.n != v.n:
            raise ModelMismatchError(
                f"Instance has {instance.n} elements, V-list has {v.n}"
            )
        for counter, members in zip(counters, partition.groups):
            counter[encode_po([instance.values[i] for i in members], v)] += 1
        seen += 1
        if seen == samples:
            break
    if seen < samples:
        raise InsufficientInstancesError(
            f"Outcome learning needs {samples} instances, stream ended after {seen}",
            required=samples,
            available=seen,
        )

    tries = tuple(
        PoTrie(members, v.n, counter)
        for members, counter in zip(partition.groups, counters)
    )
    for k, trie in enumerate(tries):
        _LOGGER.debug(
            "Group %d: %d distinct outcomes from %d samples", k, trie.leaves, samples
        )
    _LOGGER.info(
        "Learned outcome tries for %d groups from %d samples", len(tries), samples
    )
    return LearnedModel(
        n=v.n,
        mu=mu,
        sigma=sigma,
        partition=partition,
        vlist=v,
        tries=tries,
        samples=samples,
        required=samples if required is None else required,
        rho=rho,
        provenance=dict(provenance or {}),
    )
