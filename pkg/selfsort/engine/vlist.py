"""Landmark list V_0..V_{n+1} and predecessor queries."""
from __future__ import annotations

from bisect import bisect_right
from collections.abc import Sequence
from dataclasses import dataclass
import logging
import math

import numpy as np

from .exceptions import LearningError, ModelMismatchError
from .instance_model import Instance

_LOGGER = logging.getLogger(__name__)


def lambda_for(n: int) -> int:
    """Number of instances merged into the V-list: ceil(log2 n), at least 1."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class VList:
    """Finite landmarks V_1..V_n; V_0 and V_{n+1} are implicit infinities."""

    landmarks: tuple[float, ...]

    def __post_init__(self) -> None:
        """Validate ordering and finiteness."""
        values = tuple(float(v) for v in self.landmarks)
        if not all(math.isfinite(v) for v in values):
            raise LearningError("Landmarks must be finite")
        if any(b < a for a, b in zip(values, values[1:])):
            raise LearningError("Landmarks must be non-decreasing")
        object.__setattr__(self, "landmarks", values)

    @property
    def n(self) -> int:
        """Number of finite landmarks."""
        return len(self.landmarks)

    def value(self, r: int) -> float:
        """V_r including the sentinels."""
        if r == 0:
            return -math.inf
        if r == self.n + 1:
            return math.inf
        if not 0 < r <= self.n:
            raise IndexError(f"Landmark index {r} outside 0..{self.n + 1}")
        return self.landmarks[r - 1]

    def with_sentinels(self) -> tuple[float, ...]:
        """All n+2 landmark values."""
        return (-math.inf, *self.landmarks, math.inf)


def build_vlist(
    instances: Sequence[Instance], n: int, *, lam: int | None = None
) -> VList:
    """Merge lambda instances and keep every lambda-th value."""
    expected = lambda_for(n) if lam is None else lam
    if len(instances) != expected:
        raise LearningError(
            f"V-list needs exactly {expected} instances, got {len(instances)}"
        )
    for instance in instances:
        if instance.n != n:
            raise ModelMismatchError(
                f"Instance has {instance.n} elements, expected {n}"
            )
    merged = np.sort(np.concatenate([np.asarray(i.values) for i in instances]))
    landmarks = tuple(float(merged[r * expected - 1]) for r in range(1, n + 1))
    _LOGGER.info("Built V-list from %d instances of size %d", expected, n)
    return VList(landmarks)


def predecessor(v: VList, x: float) -> int:
    """Largest r with V_r <= x."""
    return bisect_right(v.landmarks, x)


def predecessor_counted(v: VList, x: float) -> tuple[int, int]:
    """Binary search for the predecessor; returns (r, value comparisons)."""
    lo, hi = 0, v.n
    comparisons = 0
    while lo < hi:
        mid = (lo + hi) // 2
        comparisons += 1
        if v.landmarks[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo, comparisons
