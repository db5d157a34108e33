"""Adversarial true-center configurations and the urns used to reason about them."""
import dataclasses
import itertools
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gmml.mixture import ArrayLike, MixtureModel

DEFAULT_RATIO = 0.01
MAX_FAITHFUL_LEVELS = 4


@dataclasses.dataclass(frozen=True)
class Interval:
    """Closed ball B(center, halfwidth) on the line, or its open complement."""
    center: float
    halfwidth: float
    complement: bool = False

    def contains(self, x: ArrayLike) -> np.ndarray:
        inside = np.abs(np.asarray(x, dtype=float) - self.center) <= self.halfwidth
        return ~inside if self.complement else inside

    def count(self, points: np.ndarray) -> int:
        return int(np.count_nonzero(self.contains(np.ravel(points))))

    def __repr__(self) -> str:
        prefix = 'not ' if self.complement else ''
        return f'{prefix}B({self.center!r}, {self.halfwidth!r})'


@dataclasses.dataclass(frozen=True)
class ThreeComponentSpec:
    """True centers (-R, R, gamma R)."""
    R: float
    gamma: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f'R must be positive, got {self.R}.')
        if not self.gamma > 1:
            raise ValueError(f'gamma must exceed 1, got {self.gamma}.')

    @property
    def lower_face(self) -> float:
        return self.gamma * self.R / 3

    @property
    def upper_face(self) -> float:
        return 2 * self.gamma * self.R / 3


def three_component(spec: ThreeComponentSpec) -> MixtureModel:
    return MixtureModel.from_centers([-spec.R, spec.R, spec.gamma * spec.R])


def region_d_contains(mu: ArrayLike, spec: ThreeComponentSpec) -> bool:
    """Membership in the closed region D.

    For three centers D is {mu_1 <= gamma R/3, mu_2 >= 2 gamma R/3, mu_3 >= 2 gamma R/3};
    longer vectors use the same pattern, one low center followed by high ones.
    """
    values = np.ravel(np.asarray(mu, dtype=float))
    if values.size < 2:
        raise ValueError(f'Region D needs at least two centers, got {values.size}.')
    return bool(values[0] <= spec.lower_face and np.all(values[1:] >= spec.upper_face))


def extended_m_construction(count: int, R: float, gamma: float) -> MixtureModel:
    """M - 1 evenly spaced centers (2i - M) R / (M - 2) and a far center at gamma R.

    Raises:
        ValueError: if count < 3.
    """
    if count < 3:
        raise ValueError(f'The extended construction needs at least 3 components, got {count}.')
    ThreeComponentSpec(R, gamma)
    near = [(2 * i - count) * R / (count - 2) for i in range(1, count)]
    return MixtureModel.from_centers(near + [gamma * R])


@dataclasses.dataclass(frozen=True)
class TreeConstructionSpec:
    """Binary-tree construction with 2^levels leaves, pruned to `count` centers.

    Attributes:
        levels: Tree depth m.
        R: Scale of the top level.
        ratio: Decay between levels; 1/100 in the faithful construction.
        count: Number of true centers M, with 2^(m-1) < M <= 2^m. Defaults to 2^m.
        faithful: Enforce ratio = 1/100 and R >= 100^(m+1) (M+1).
    """
    levels: int
    R: float
    ratio: float = DEFAULT_RATIO
    count: Optional[int] = None
    faithful: bool = False

    def __post_init__(self):
        if self.count is None:
            object.__setattr__(self, 'count', 2 ** self.levels)
        validate_tree(self)

    @classmethod
    def faithful_scale(cls, levels: int, count: Optional[int] = None, scale: float = 1.0) -> 'TreeConstructionSpec':
        """Faithful spec at the smallest admissible R, times `scale` (>= 1)."""
        count = 2 ** levels if count is None else count
        return cls(levels, scale * 100.0 ** (levels + 1) * (count + 1), DEFAULT_RATIO, count, faithful=True)

    def urn_halfwidth(self, level: int) -> float:
        """2 R ratio^level / (1 - ratio): 2R/99 at level 1 and 2R/9900 at level 2 for ratio 1/100."""
        return 2 * self.R * self.ratio ** level / (1 - self.ratio)


def validate_tree(spec: TreeConstructionSpec) -> None:
    if spec.levels < 1:
        raise ValueError(f'The tree needs at least one level, got {spec.levels}.')
    if not spec.R > 0:
        raise ValueError(f'R must be positive, got {spec.R}.')
    if not 0 < spec.ratio < 1 / 3:
        raise ValueError(f'ratio must lie in (0, 1/3) for sibling urns to be disjoint, got {spec.ratio}.')
    if not 2 ** (spec.levels - 1) < spec.count <= 2 ** spec.levels:
        raise ValueError(f'count must lie in (2^{spec.levels - 1}, 2^{spec.levels}], got {spec.count}.')
    if spec.faithful:
        if spec.ratio != DEFAULT_RATIO:
            raise ValueError(f'The faithful construction uses ratio 1/100, got {spec.ratio}.')
        if spec.levels > MAX_FAITHFUL_LEVELS:
            raise ValueError(f'The faithful construction supports at most {MAX_FAITHFUL_LEVELS} levels.')
        minimum = 100.0 ** (spec.levels + 1) * (spec.count + 1)
        if spec.R < minimum:
            raise ValueError(f'The faithful construction needs R >= {minimum:.6g}, got {spec.R:.6g}.')


def tree_center(eps: Sequence[int], R: float, ratio: float = DEFAULT_RATIO) -> float:
    """mu(eps) = sum_i eps_i ratio^(i-1) R."""
    return float(sum(e * ratio ** i * R for i, e in enumerate(eps)))


def tree_leaf_paths(levels: int) -> List[Tuple[int, ...]]:
    """All sign vectors, in ascending order of their centers."""
    return list(itertools.product((-1, 1), repeat=levels))


def pruned_leaf_paths(spec: TreeConstructionSpec) -> List[Tuple[int, ...]]:
    """Leaves kept by assigning ceil(l/2) centers left and floor(l/2) right at every node."""

    def select(prefix: Tuple[int, ...], assigned: int) -> List[Tuple[int, ...]]:
        if assigned == 0:
            return []
        if len(prefix) == spec.levels:
            return [prefix]
        return select(prefix + (-1,), (assigned + 1) // 2) + select(prefix + (1,), assigned // 2)

    return select((), spec.count)


def _tree_model(spec: TreeConstructionSpec, paths: Sequence[Tuple[int, ...]]) -> MixtureModel:
    centers = np.array([tree_center(p, spec.R, spec.ratio) for p in paths])
    model = MixtureModel.from_centers(np.sort(centers))
    if spec.faithful:
        check_urn_membership(model, spec)
    return model


def tree_construction(spec: TreeConstructionSpec) -> MixtureModel:
    """All 2^m leaves of the tree, sorted ascending.

    Raises:
        ValueError: if spec.count is not 2^m, or a faithful spec breaks the urn invariants.
    """
    if spec.count != 2 ** spec.levels:
        raise ValueError(f'tree_construction needs count = 2^{spec.levels}; use pruned_tree for {spec.count}.')
    return _tree_model(spec, tree_leaf_paths(spec.levels))


def pruned_tree(spec: TreeConstructionSpec) -> MixtureModel:
    """The M leaves chosen by balanced ceil/floor splitting."""
    return _tree_model(spec, pruned_leaf_paths(spec))


@dataclasses.dataclass(frozen=True)
class Urn:
    """One interval of the recursive partition, identified by its sign prefix."""
    path: Tuple[int, ...]
    interval: Interval
    true_count: int
    count: int = 0


@dataclasses.dataclass(frozen=True)
class UrnPartition:
    """The two child urns of a tree node at a given level."""
    level: int
    parent: Tuple[int, ...]
    left: Urn
    right: Urn

    @property
    def counts(self) -> Tuple[int, int]:
        return self.left.count, self.right.count

    @property
    def true_counts(self) -> Tuple[int, int]:
        return self.left.true_count, self.right.true_count


def urn_interval(spec: TreeConstructionSpec, path: Tuple[int, ...]) -> Interval:
    return Interval(tree_center(path, spec.R, spec.ratio), spec.urn_halfwidth(len(path)))


def urns_at_level(spec: TreeConstructionSpec,
                  level: int,
                  points: Optional[ArrayLike] = None) -> List[UrnPartition]:
    """The 2^level urns at `level`, grouped by parent node.

    Args:
        spec: Tree construction.
        level: Depth in 1..m.
        points: Optional initial centers; their per-urn counts fill `Urn.count`.

    Raises:
        ValueError: if level is outside 1..m.
    """
    if not 1 <= level <= spec.levels:
        raise ValueError(f'Level must lie in 1..{spec.levels}, got {level}.')
    leaves = pruned_leaf_paths(spec)
    values = np.ravel(np.asarray(points, dtype=float)) if points is not None else np.empty(0)

    def urn(path: Tuple[int, ...]) -> Urn:
        interval = urn_interval(spec, path)
        true_count = sum(1 for leaf in leaves if leaf[:level] == path)
        return Urn(path, interval, true_count, interval.count(values))

    partitions = []
    for parent in itertools.product((-1, 1), repeat=level - 1):
        partitions.append(UrnPartition(level, parent, urn(parent + (-1,)), urn(parent + (1,))))
    return partitions


def count_in_urns(points: ArrayLike, spec: TreeConstructionSpec, level: int) -> Tuple[Tuple[int, int], ...]:
    """(left, right) counts of `points` for every node at depth level - 1."""
    return tuple(p.counts for p in urns_at_level(spec, level, points))


def check_urn_membership(model: MixtureModel, spec: TreeConstructionSpec) -> None:
    """Every true center lies in exactly one urn per level, with the expected counts.

    Raises:
        ValueError: on any violation.
    """
    centers = model.line
    for level in range(1, spec.levels + 1):
        partitions = urns_at_level(spec, level, centers)
        urns = [u for p in partitions for u in (p.left, p.right)]
        membership = np.sum([u.interval.contains(centers) for u in urns], axis=0)
        if np.any(membership != 1):
            raise ValueError(f'At level {level} some true centers are not in exactly one urn.')
        for u in urns:
            if u.count != u.true_count:
                raise ValueError(f'Urn {u.path} holds {u.count} centers, expected {u.true_count}.')


@dataclasses.dataclass(frozen=True)
class DiffuseSpec:
    """A (c, delta)-diffuse instance.

    Attributes:
        c: Ball position multiplier, > 20.
        delta: Ball radius.
        left: Centers inside B(-c delta, delta).
        right: Centers inside B(c delta, delta).
        far: Remaining centers outside B(0, 20 c delta).
        for_trapping: Also require delta > log M + 3 with M the inner count.
    """
    c: float
    delta: float
    left: Tuple[float, ...]
    right: Tuple[float, ...]
    far: Tuple[float, ...] = ()
    for_trapping: bool = True

    def __post_init__(self):
        for name in ('left', 'right', 'far'):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        validate_diffuse_spec(self)

    @classmethod
    def spread(cls, c: float, delta: float, n_left: int, n_right: int,
               far: Sequence[float] = (), for_trapping: bool = True) -> 'DiffuseSpec':
        """Place n_left and n_right centers evenly over the middle half of each ball."""

        def spread_in(center: float, n: int) -> Tuple[float, ...]:
            if n == 1:
                return (center,)
            return tuple(np.linspace(center - delta / 2, center + delta / 2, n))

        return cls(c, delta, spread_in(-c * delta, n_left), spread_in(c * delta, n_right), tuple(far), for_trapping)

    @property
    def inner_count(self) -> int:
        return len(self.left) + len(self.right)

    @property
    def total_count(self) -> int:
        return self.inner_count + len(self.far)

    def regions(self) -> Tuple[Interval, Interval, Interval]:
        """B(-c delta, 2 delta), B(c delta, 2 delta) and the complement of B(0, 20 c delta)."""
        cd = self.c * self.delta
        return Interval(-cd, 2 * self.delta), Interval(cd, 2 * self.delta), Interval(0.0, 20 * cd, complement=True)


def validate_diffuse_spec(spec: DiffuseSpec) -> None:
    if not spec.c > 20:
        raise ValueError(f'c must exceed 20, got {spec.c}.')
    if not spec.delta > 0:
        raise ValueError(f'delta must be positive, got {spec.delta}.')
    if spec.for_trapping and not spec.delta > math.log(spec.inner_count) + 3:
        raise ValueError(f'delta must exceed log M + 3 = {math.log(spec.inner_count) + 3:.4f}, got {spec.delta}.')
    model = MixtureModel.from_centers(list(spec.left + spec.right + spec.far) or [0.0])
    if not validate_diffuse(model, spec.c, spec.delta):
        raise ValueError(f'Centers of {spec!r} do not satisfy the diffuse conditions.')
    cd = spec.c * spec.delta
    if any(abs(v + cd) > spec.delta for v in spec.left) or any(abs(v - cd) > spec.delta for v in spec.right):
        raise ValueError('Inner centers are assigned to the wrong ball.')


def make_diffuse(spec: DiffuseSpec) -> MixtureModel:
    return MixtureModel.from_centers(list(spec.left + spec.right + spec.far))


def validate_diffuse(model: MixtureModel, c: float, delta: float) -> bool:
    """Check conditions (a)-(c) of a (c, delta)-diffuse mixture."""
    centers = model.line
    cd = c * delta
    in_left = np.abs(centers + cd) <= delta
    in_right = np.abs(centers - cd) <= delta
    rest = centers[~(in_left | in_right)]
    return bool(in_left.any() and in_right.any() and np.all(np.abs(rest) > 20 * cd))


CONSTRUCTIONS: Dict[str, Callable[..., MixtureModel]] = {
    'three': lambda R, gamma: three_component(ThreeComponentSpec(R, gamma)),
    'extended': lambda count, R, gamma: extended_m_construction(count, R, gamma),
    'tree': lambda levels, R, ratio=DEFAULT_RATIO, faithful=False: tree_construction(
        TreeConstructionSpec(levels, R, ratio, faithful=faithful)),
    'pruned': lambda levels, R, count, ratio=DEFAULT_RATIO, faithful=False: pruned_tree(
        TreeConstructionSpec(levels, R, ratio, count, faithful)),
    'diffuse': lambda c, delta, n_left, n_right, far=(): make_diffuse(
        DiffuseSpec.spread(c, delta, n_left, n_right, far, for_trapping=False)),
}


def construct(kind: str, **params: float) -> MixtureModel:
    """Build a construction by name, as the CLI does.

    Raises:
        ValueError: for an unknown kind.
    """
    builder = CONSTRUCTIONS.get(kind)
    if builder is None:
        raise ValueError(f'Unknown construction {kind!r}; choose one of {sorted(CONSTRUCTIONS)}.')
    return builder(**params)
