"""Random initialization, the event E_M and good initializations of the tree construction."""
import dataclasses
import itertools
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from gmml.constructions import TreeConstructionSpec, pruned_leaf_paths, tree_center, urn_interval
from gmml.mixture import LabeledSample, MixtureModel, sample

SINGLETON = 'singleton'
ALL_ONE_SIDE = 'all-one-side'
BALANCED = 'balanced-recurse'
BAD_SPLIT = 'bad-split'


def random_init(truth: MixtureModel, rng: np.random.Generator) -> List[LabeledSample]:
    """M independent draws from GMM(mu*), keeping the latent labels."""
    return sample(truth, truth.count, rng)


def init_centers(init: Sequence[LabeledSample]) -> np.ndarray:
    """Initial centers of a labeled draw as an (M, d) array."""
    return np.array([s.point for s in init], dtype=float)


def event_e_holds(init: Sequence[LabeledSample], truth: MixtureModel, radius: Optional[float] = None) -> bool:
    """Whether every initial center lies within `radius` of its own true center.

    The radius defaults to M, the number of true components.

    Raises:
        ValueError: if a label does not name a true component.
    """
    radius = truth.count if radius is None else radius
    for s in init:
        if not 0 <= s.component < truth.count:
            raise ValueError(f'Label {s.component} is not a component of a {truth.count}-component model.')
        if np.linalg.norm(np.asarray(s.point) - truth.centers[s.component]) > radius:
            return False
    return True


def event_e_probability(count: int) -> float:
    """P(E_M) = (1 - P(|N(0,1)| > M))^M on the line."""
    if count < 1:
        raise ValueError(f'count must be positive, got {count}.')
    return float((1.0 - 2.0 * norm.sf(count)) ** count)


@dataclasses.dataclass(frozen=True)
class Split:
    """Initial and true center counts of the two child urns of one tree node."""
    parent: Tuple[int, ...]
    counts: Tuple[int, int]
    true_counts: Tuple[int, int]

    @property
    def level(self) -> int:
        return len(self.parent) + 1


@dataclasses.dataclass(frozen=True)
class InitClassification:
    """Verdict of the recursive good-initialization rules.

    Attributes:
        good: Whether the rules accept the initialization.
        reason: The rule that decided it: the first bad split if any, else the rule at the root.
        splits: Every split examined, in depth-first order.
        one_sided: A node holding several initial centers was accepted because they
            all fell into one child urn.
        detail: Human-readable note for rejected initializations.
    """
    good: bool
    reason: str
    splits: Tuple[Split, ...] = ()
    one_sided: bool = False
    detail: str = ''

    @property
    def levels(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        """The (left, right) count pairs grouped by level."""
        depth = max((s.level for s in self.splits), default=0)
        return tuple(tuple(s.counts for s in self.splits if s.level == level)
                     for level in range(1, depth + 1))


def classify_init(init: Sequence[float], spec: TreeConstructionSpec) -> InitClassification:
    """Apply the good-initialization rules to one-dimensional initial centers.

    A node's centers are good if there is one of them, if they all lie in one
    child urn, or if the child urns receive exactly as many initial centers as
    they hold true centers and both children are good. A center outside both
    child urns of its node makes the initialization bad.
    """
    points = np.ravel(np.asarray(init, dtype=float))
    leaves = pruned_leaf_paths(spec)
    splits: List[Split] = []
    one_sided = False

    def true_count(path: Tuple[int, ...]) -> int:
        return sum(1 for leaf in leaves if leaf[:len(path)] == path)

    def visit(path: Tuple[int, ...], values: np.ndarray) -> Tuple[bool, str, str]:
        nonlocal one_sided
        if values.size <= 1:
            return True, SINGLETON, ''
        if len(path) == spec.levels:
            return False, BAD_SPLIT, f'{values.size} centers share leaf {path}'
        left_path, right_path = path + (-1,), path + (1,)
        in_left = urn_interval(spec, left_path).contains(values)
        in_right = urn_interval(spec, right_path).contains(values)
        counts = (int(in_left.sum()), int(in_right.sum()))
        expected = (true_count(left_path), true_count(right_path))
        splits.append(Split(path, counts, expected))
        if not np.all(in_left | in_right):
            return False, BAD_SPLIT, f'centers outside the urns below {path}'
        if 0 in counts:
            one_sided = True
            return True, ALL_ONE_SIDE, ''
        if counts != expected:
            return False, BAD_SPLIT, f'split {counts} below {path}, expected {expected}'
        for child, mask in ((left_path, in_left), (right_path, in_right)):
            good, reason, detail = visit(child, values[mask])
            if not good:
                return good, reason, detail
        return True, BALANCED, ''

    good, reason, detail = visit((), points)
    return InitClassification(good, reason, tuple(splits), one_sided, detail)


def _validate_power_of_two(count: int) -> None:
    if count < 1 or count & (count - 1):
        raise ValueError(f'count must be a power of two, got {count}.')


def exact_good_init_probability(count: int) -> Fraction:
    """Probability that M uniform leaf labels form a good initialization.

    P(1) = 1 and P(M) = 2 / 2^M + C(M, M/2) / 2^M * P(M/2)^2.

    Raises:
        ValueError: if count is not a power of two.

    Examples:
        >>> import gmml
        >>> gmml.exact_good_init_probability(8)
        Fraction(39, 512)
    """
    _validate_power_of_two(count)
    if count == 1:
        return Fraction(1)
    half = exact_good_init_probability(count // 2)
    return Fraction(2, 2 ** count) + Fraction(math.comb(count, count // 2), 2 ** count) * half * half


def good_init_recursion_bound(count: int) -> Fraction:
    """Upper bound B(1) = 1, B(M) = 1 / 2^(M-1) + B(M/2)^2 / 2 on the good-initialization probability."""
    _validate_power_of_two(count)
    if count == 1:
        return Fraction(1)
    half = good_init_recursion_bound(count // 2)
    return Fraction(1, 2 ** (count - 1)) + half * half / 2


def _compositions(total: int, parts: int):
    # stars and bars
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        edges = (-1,) + bars + (total + parts - 1,)
        yield tuple(edges[k + 1] - edges[k] - 1 for k in range(parts))


def enumerate_good_init_probability(count: int, levels: Optional[int] = None) -> Fraction:
    """Brute-force good-initialization probability for uniform leaf labels.

    Enumerates every vector of per-leaf counts, weights it by its multinomial
    probability and runs classify_init on centers placed at the leaves. This is
    the same as enumerating all M^M label assignments.

    Args:
        count: Number of true centers M.
        levels: Tree depth; defaults to ceil(log2 M).
    """
    if count < 1:
        raise ValueError(f'count must be positive, got {count}.')
    levels = max(1, math.ceil(math.log2(count))) if levels is None else levels
    if count == 1:
        return Fraction(1)
    spec = TreeConstructionSpec(levels, 1.0, count=count)
    leaves = pruned_leaf_paths(spec)
    centers = [tree_center(leaf, spec.R, spec.ratio) for leaf in leaves]
    total = Fraction(0)
    for counts in _compositions(count, len(leaves)):
        points = np.repeat(centers, counts)
        if classify_init(points, spec).good:
            ways = math.factorial(count)
            for c in counts:
                ways //= math.factorial(c)
            total += Fraction(ways, count ** count)
    return total
