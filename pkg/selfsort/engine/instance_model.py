"""Hidden-group instance model: piecewise functions, sources, worlds."""
from __future__ import annotations

from bisect import bisect_right
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
import logging
import math

import numpy as np

from ..const import (
    DEFAULT_ATOMS,
    DEFAULT_ATTEMPT_BUDGET,
    DEFAULT_GAUSSIAN_SD,
    DEFAULT_VALUE_LEVELS,
    GAUSSIAN_REJECTION_LIMIT,
    PRESET_CONTINUOUS,
    PRESET_DISCRETE,
    PRESET_GAUSSIAN,
    PRESET_MIXED,
    PRESET_POINT,
    SOURCE_CONTINUOUS,
    SOURCE_DISCRETE,
    SOURCE_GAUSSIAN,
    SOURCE_KINDS,
    SOURCE_PRESETS,
)
from .exceptions import FunctionDomainError, InvalidWorldError, WorldGenerationError

_LOGGER = logging.getLogger(__name__)

Rational = Fraction | int

# Hidden variables live on the unit interval
DOMAIN_LO = Fraction(0)
DOMAIN_HI = Fraction(1)

# Random atoms are drawn on this rational grid
ATOM_RESOLUTION = 1_000_000


@dataclass(frozen=True)
class PiecewiseLinearFunction:
    """Continuous piecewise-linear map from a hidden value to an element value."""

    vertices: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self) -> None:
        """Validate vertices."""
        if len(self.vertices) < 2:
            raise FunctionDomainError(
                f"Function needs at least 2 vertices, got {len(self.vertices)}"
            )
        normalized = tuple((Fraction(z), Fraction(y)) for z, y in self.vertices)
        for (z0, _), (z1, _) in zip(normalized, normalized[1:]):
            if z1 <= z0:
                raise FunctionDomainError(
                    f"Breakpoints must be strictly increasing: {z0} then {z1}"
                )
        object.__setattr__(self, "vertices", normalized)

    @classmethod
    def from_points(
        cls, points: Sequence[tuple[Rational, Rational]]
    ) -> PiecewiseLinearFunction:
        """Build a function from (z, y) pairs."""
        return cls(tuple((Fraction(z), Fraction(y)) for z, y in points))

    @property
    def z_lo(self) -> Fraction:
        """Left end of the domain."""
        return self.vertices[0][0]

    @property
    def z_hi(self) -> Fraction:
        """Right end of the domain."""
        return self.vertices[-1][0]

    @property
    def slopes(self) -> tuple[Fraction, ...]:
        """Slope of every segment."""
        return tuple(
            (y1 - y0) / (z1 - z0)
            for (z0, y0), (z1, y1) in zip(self.vertices, self.vertices[1:])
        )

    @cached_property
    def _grid(self) -> tuple[np.ndarray, np.ndarray]:
        zs = np.array([float(z) for z, _ in self.vertices])
        ys = np.array([float(y) for _, y in self.vertices])
        return zs, ys

    def evaluate_float(self, z: float) -> float:
        """Evaluate in floating point; exact at vertices."""
        zs, ys = self._grid
        return float(np.interp(z, zs, ys))


def eval_function(f: PiecewiseLinearFunction, z: Rational) -> Fraction:
    """Evaluate f exactly at z by linear interpolation."""
    z = Fraction(z)
    if not f.z_lo <= z <= f.z_hi:
        raise FunctionDomainError(f"z={z} outside domain [{f.z_lo}, {f.z_hi}]")
    zs = [vz for vz, _ in f.vertices]
    index = bisect_right(zs, z) - 1
    if index >= len(zs) - 1:
        return f.vertices[-1][1]
    (z0, y0), (z1, y1) = f.vertices[index], f.vertices[index + 1]
    return y0 + (y1 - y0) * (z - z0) / (z1 - z0)


def extrema_count(f: PiecewiseLinearFunction) -> int:
    """Count interior extrema as slope sign changes; plateaus are skipped."""
    signs = [1 if s > 0 else -1 for s in f.slopes if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a != b)


def has_flat_segment(f: PiecewiseLinearFunction) -> bool:
    """Return True if any segment has zero slope."""
    return any(s == 0 for s in f.slopes)


def intersection_count(
    f: PiecewiseLinearFunction, g: PiecewiseLinearFunction
) -> tuple[int, bool]:
    """Count distinct intersection points of f and g over their common domain.

    Returns the count and whether the functions share a coincident segment,
    in which case the count is meaningless.
    """
    lo = max(f.z_lo, g.z_lo)
    hi = min(f.z_hi, g.z_hi)
    if lo > hi:
        return 0, False
    grid = sorted(
        {lo, hi}
        | {z for z, _ in f.vertices if lo <= z <= hi}
        | {z for z, _ in g.vertices if lo <= z <= hi}
    )
    diffs = [eval_function(f, z) - eval_function(g, z) for z in grid]

    count = sum(1 for d in diffs if d == 0)
    for d0, d1 in zip(diffs, diffs[1:]):
        if d0 == 0 and d1 == 0:
            return count, True
        if d0 * d1 < 0:
            count += 1
    return count, False


@dataclass(frozen=True)
class HiddenSource:
    """Distribution of a group's hidden variable."""

    kind: str
    low: Fraction = DOMAIN_LO
    high: Fraction = DOMAIN_HI
    mean: float = 0.5
    sd: float = DEFAULT_GAUSSIAN_SD
    atoms: tuple[Fraction, ...] = ()

    def __post_init__(self) -> None:
        """Validate source parameters."""
        if self.kind not in SOURCE_KINDS:
            raise InvalidWorldError(f"Unknown source kind: {self.kind}")
        object.__setattr__(self, "low", Fraction(self.low))
        object.__setattr__(self, "high", Fraction(self.high))
        if self.low > self.high:
            raise InvalidWorldError(f"Empty source interval [{self.low}, {self.high}]")
        if self.kind == SOURCE_DISCRETE:
            atoms = tuple(sorted({Fraction(a) for a in self.atoms}))
            if not atoms or len(atoms) != len(self.atoms):
                raise InvalidWorldError("Discrete source needs K >= 1 distinct atoms")
            object.__setattr__(self, "atoms", atoms)
        if self.kind == SOURCE_GAUSSIAN and self.sd <= 0:
            raise InvalidWorldError(f"Gaussian sd must be positive, got {self.sd}")

    @classmethod
    def continuous(cls, low: Rational = 0, high: Rational = 1) -> HiddenSource:
        """Continuous uniform source on [low, high]."""
        return cls(SOURCE_CONTINUOUS, low=Fraction(low), high=Fraction(high))

    @classmethod
    def gaussian(
        cls, mean: float, sd: float, low: Rational = 0, high: Rational = 1
    ) -> HiddenSource:
        """Gaussian source truncated to [low, high]."""
        return cls(
            SOURCE_GAUSSIAN, low=Fraction(low), high=Fraction(high), mean=mean, sd=sd
        )

    @classmethod
    def discrete(cls, atoms: Sequence[Rational]) -> HiddenSource:
        """Uniform source over finitely many atoms."""
        fractions = tuple(Fraction(a) for a in atoms)
        return cls(
            SOURCE_DISCRETE,
            low=min(fractions, default=DOMAIN_LO),
            high=max(fractions, default=DOMAIN_HI),
            atoms=fractions,
        )

    @property
    def is_discrete(self) -> bool:
        """True when the support is finite."""
        return self.kind == SOURCE_DISCRETE

    def support_within(self, lo: Fraction, hi: Fraction) -> bool:
        """Check the support lies inside [lo, hi]."""
        if self.is_discrete:
            return all(lo <= a <= hi for a in self.atoms)
        return lo <= self.low and self.high <= hi

    def sample(self, rng: np.random.Generator) -> float:
        """Draw one hidden value."""
        if self.kind == SOURCE_DISCRETE:
            return float(self.atoms[int(rng.integers(len(self.atoms)))])
        low, high = float(self.low), float(self.high)
        if self.kind == SOURCE_CONTINUOUS:
            return float(rng.uniform(low, high))
        for _ in range(GAUSSIAN_REJECTION_LIMIT):
            z = float(rng.normal(self.mean, self.sd))
            if low <= z <= high:
                return z
        _LOGGER.warning(
            "Truncated gaussian rejection limit hit (mean=%s, sd=%s); clipping",
            self.mean,
            self.sd,
        )
        return min(max(float(rng.normal(self.mean, self.sd)), low), high)


@dataclass(frozen=True)
class GroupModel:
    """One hidden group: members driven by a shared hidden variable."""

    group_id: int
    members: tuple[int, ...]
    functions: tuple[PiecewiseLinearFunction, ...]
    source: HiddenSource

    def __post_init__(self) -> None:
        """Validate group structure."""
        if not self.members:
            raise InvalidWorldError(f"Group {self.group_id} has no members")
        if len(self.members) != len(self.functions):
            raise InvalidWorldError(
                f"Group {self.group_id}: {len(self.members)} members but "
                f"{len(self.functions)} functions"
            )
        if list(self.members) != sorted(set(self.members)):
            raise InvalidWorldError(
                f"Group {self.group_id}: members must be strictly increasing"
            )

    @property
    def size(self) -> int:
        """Number of members n_k."""
        return len(self.members)

    def member_values(self, z: float) -> list[float]:
        """Evaluate every member function at one hidden value."""
        return [f.evaluate_float(z) for f in self.functions]


@dataclass(frozen=True)
class World:
    """Ground-truth generator state."""

    n: int
    mu: int
    sigma: int
    groups: tuple[GroupModel, ...]
    seed: int | None = None

    def __post_init__(self) -> None:
        """Validate that groups partition the element indices."""
        covered = sorted(i for group in self.groups for i in group.members)
        if covered != list(range(self.n)):
            raise InvalidWorldError(
                f"Group members do not partition 0..{self.n - 1}"
            )

    @property
    def g(self) -> int:
        """Number of groups."""
        return len(self.groups)

    @property
    def is_discrete(self) -> bool:
        """True when every group has a finite source."""
        return all(group.source.is_discrete for group in self.groups)


@dataclass(frozen=True)
class Instance:
    """One draw of all element values."""

    values: tuple[float, ...]
    hidden: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        """Validate values."""
        values = tuple(float(v) for v in self.values)
        if not all(math.isfinite(v) for v in values):
            raise InvalidWorldError("Instance values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        """Number of elements."""
        return len(self.values)


@dataclass
class ValidationReport:
    """Exact constraint check of a world."""

    mu: int
    sigma: int
    extrema: dict[int, int] = field(default_factory=dict)
    intersections: dict[tuple[int, int], int] = field(default_factory=dict)
    coincident_pairs: list[tuple[int, int]] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """True when no violation was found."""
        return not self.violations

    def as_dict(self) -> dict[str, object]:
        """Serialize for reports."""
        return {
            "mu": self.mu,
            "sigma": self.sigma,
            "ok": self.ok,
            "extrema": {str(i): c for i, c in sorted(self.extrema.items())},
            "intersections": {
                f"{i},{j}": c for (i, j), c in sorted(self.intersections.items())
            },
            "coincident_pairs": [list(p) for p in self.coincident_pairs],
            "violations": list(self.violations),
        }


def validate_world(
    world: World, mu: int | None = None, sigma: int | None = None
) -> ValidationReport:
    """Count extrema and same-group intersections exactly and flag violations."""
    mu = world.mu if mu is None else mu
    sigma = world.sigma if sigma is None else sigma
    report = ValidationReport(mu=mu, sigma=sigma)

    for group in world.groups:
        lo, hi = group.functions[0].z_lo, group.functions[0].z_hi
        if not group.source.support_within(lo, hi):
            report.violations.append(
                f"group {group.group_id}: source support outside [{lo}, {hi}]"
            )
        for element, f in zip(group.members, group.functions):
            if (f.z_lo, f.z_hi) != (lo, hi):
                report.violations.append(
                    f"element {element}: domain [{f.z_lo}, {f.z_hi}] differs "
                    f"from group domain [{lo}, {hi}]"
                )
            count = extrema_count(f)
            report.extrema[element] = count
            if count > mu:
                report.violations.append(
                    f"element {element}: {count} extrema > mu={mu}"
                )
        for a in range(group.size):
            for b in range(a + 1, group.size):
                i, j = group.members[a], group.members[b]
                count, coincident = intersection_count(
                    group.functions[a], group.functions[b]
                )
                report.intersections[(i, j)] = count
                if coincident:
                    report.coincident_pairs.append((i, j))
                    report.violations.append(
                        f"elements {i},{j}: coincident segments"
                    )
                elif count > sigma:
                    report.violations.append(
                        f"elements {i},{j}: {count} intersections > sigma={sigma}"
                    )

    _LOGGER.debug(
        "Validated world n=%d: %d violations", world.n, len(report.violations)
    )
    return report


def draw_instance(world: World, rng: np.random.Generator) -> Instance:
    """Sample each group's hidden value and evaluate its members."""
    values = [0.0] * world.n
    hidden = []
    for group in world.groups:
        z = group.source.sample(rng)
        hidden.append(z)
        for element, value in zip(group.members, group.member_values(z)):
            values[element] = value
    return Instance(tuple(values), tuple(hidden))


def instance_stream(world: World, seed: int) -> Iterator[Instance]:
    """Yield fresh instances from one seeded generator."""
    rng = np.random.default_rng(seed)
    while True:
        yield draw_instance(world, rng)


def draw_instances(world: World, count: int, seed: int) -> list[Instance]:
    """Draw a fixed number of instances."""
    rng = np.random.default_rng(seed)
    return [draw_instance(world, rng) for _ in range(count)]


def _random_partition(n: int, g: int, rng: np.random.Generator) -> list[list[int]]:
    order = rng.permutation(n).tolist()
    groups: list[list[int]] = [[element] for element in order[:g]]
    for element in order[g:]:
        groups[int(rng.integers(g))].append(element)
    return [sorted(members) for members in groups]


def _make_source(
    preset: str, group_index: int, atoms: int, rng: np.random.Generator
) -> HiddenSource:
    if preset == PRESET_MIXED:
        preset = (PRESET_CONTINUOUS, PRESET_GAUSSIAN, PRESET_DISCRETE)[group_index % 3]
    if preset == PRESET_CONTINUOUS:
        return HiddenSource.continuous()
    if preset == PRESET_GAUSSIAN:
        mean = float(rng.uniform(0.25, 0.75))
        return HiddenSource.gaussian(mean, DEFAULT_GAUSSIAN_SD)
    count = 1 if preset == PRESET_POINT else atoms
    picks = rng.choice(ATOM_RESOLUTION + 1, size=count, replace=False)
    return HiddenSource.discrete([Fraction(int(p), ATOM_RESOLUTION) for p in picks])


class _GroupBuilder:
    """Rejection sampler for one group's member functions.

    Members are a shared base shape plus a distinct offset plus noise. Noise
    shrinks as attempts fail, so feasible parameters converge to shifted
    copies of the base, which never intersect.
    """

    def __init__(
        self,
        size: int,
        mu: int,
        sigma: int,
        grid: list[Fraction],
        levels: int,
        budget: int,
        rng: np.random.Generator,
    ) -> None:
        self.size = size
        self.mu = mu
        self.sigma = sigma
        self.grid = grid
        self.levels = levels
        self.budget = budget
        self.rng = rng
        self.attempts = 0
        self.amplitude = max(1, levels // 4)
        self.jitter = max(1, self.amplitude // 4)

    def _spend(self) -> None:
        self.attempts += 1
        if self.attempts > self.budget:
            raise WorldGenerationError(
                f"No valid group of {self.size} members with mu={self.mu}, "
                f"sigma={self.sigma}, value_levels={self.levels} within "
                f"{self.budget} attempts"
            )

    def _base(self) -> list[int]:
        while True:
            self._spend()
            base = self.rng.integers(0, self.amplitude + 1, size=len(self.grid))
            ys = [int(y) for y in base]
            f = self._function(ys)
            if not has_flat_segment(f) and extrema_count(f) <= self.mu:
                return ys

    def _function(self, ys: Sequence[int]) -> PiecewiseLinearFunction:
        return PiecewiseLinearFunction(
            tuple((z, Fraction(y)) for z, y in zip(self.grid, ys))
        )

    def build(self, shift: int) -> list[PiecewiseLinearFunction]:
        base = self._base()
        pool = list(range(max(1, self.levels - self.amplitude)))
        accepted: list[PiecewiseLinearFunction] = []
        failures = 0
        for _ in range(self.size):
            while True:
                self._spend()
                if not pool:
                    raise WorldGenerationError(
                        f"value_levels={self.levels} cannot separate "
                        f"{self.size} members with sigma={self.sigma}"
                    )
                noise = self.jitter >> (failures // 8)
                pick = int(self.rng.integers(len(pool)))
                wobble = (
                    self.rng.integers(-noise, noise + 1, size=len(base))
                    if noise
                    else np.zeros(len(base), dtype=int)
                )
                ys = [shift + b + pool[pick] + int(e) for b, e in zip(base, wobble)]
                f = self._function(ys)
                if self._acceptable(f, accepted):
                    accepted.append(f)
                    pool.pop(pick)
                    break
                failures += 1
                if not noise:
                    pool.pop(pick)
        return accepted

    def _acceptable(
        self, f: PiecewiseLinearFunction, accepted: list[PiecewiseLinearFunction]
    ) -> bool:
        if has_flat_segment(f) or extrema_count(f) > self.mu:
            return False
        for other in accepted:
            count, coincident = intersection_count(f, other)
            if coincident or count > self.sigma:
                return False
        return True


def generate_world(
    n: int,
    g: int,
    mu: int,
    sigma: int,
    seed: int,
    *,
    source: str = PRESET_CONTINUOUS,
    atoms: int = DEFAULT_ATOMS,
    value_levels: int | None = None,
    grid_points: int | None = None,
    attempt_budget: int = DEFAULT_ATTEMPT_BUDGET,
) -> World:
    """Generate a valid world by bounded rejection sampling."""
    if not n >= g >= 1:
        raise WorldGenerationError(f"Need n >= g >= 1, got n={n}, g={g}")
    if mu < 0 or sigma < 0:
        raise WorldGenerationError(f"Need mu, sigma >= 0, got mu={mu}, sigma={sigma}")
    if source not in SOURCE_PRESETS:
        raise WorldGenerationError(f"Unknown source preset: {source}")
    points = mu + 2 if grid_points is None else grid_points
    if points < 2:
        raise WorldGenerationError(f"grid_points must be >= 2, got {points}")

    rng = np.random.default_rng(seed)
    grid = [Fraction(i, points - 1) for i in range(points)]
    partition = _random_partition(n, g, rng)

    groups = []
    for k, members in enumerate(partition):
        levels = value_levels or max(DEFAULT_VALUE_LEVELS, 16 * len(members))
        hidden = _make_source(source, k, atoms, rng)
        builder = _GroupBuilder(
            len(members), mu, sigma, grid, levels, attempt_budget, rng
        )
        functions = builder.build(shift=k * (levels // 2))
        groups.append(GroupModel(k, tuple(members), tuple(functions), hidden))
        _LOGGER.debug(
            "Group %d: %d members after %d attempts", k, len(members), builder.attempts
        )

    world = World(n=n, mu=mu, sigma=sigma, groups=tuple(groups), seed=seed)
    _LOGGER.info("Generated world n=%d g=%d mu=%d sigma=%d", n, g, mu, sigma)
    return world
