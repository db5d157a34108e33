"""Deterministic one-dimensional expectations under GMM(mu*)."""
import dataclasses
import functools
import inspect
from typing import Any, Callable, Tuple

import numpy as np

from gmml.mixture import MixtureModel

VALID_SCHEMES = ('hermite', 'trapezoid')


class UnsupportedDimensionError(ValueError):
    """Raised when population calculus is requested outside d = 1."""


@dataclasses.dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature rule applied to every true component.

    Attributes:
        order: Gauss-Hermite node count per component.
        scheme: 'hermite' for production use, 'trapezoid' for cross-validation.
        truncation_radius: Half-width, in standard deviations, of the trapezoid window.
        validation_points: Trapezoid node count per component.
    """
    order: int = 200
    scheme: str = 'hermite'
    truncation_radius: float = 12.0
    validation_points: int = 4000

    def __post_init__(self):
        validate_quadrature(self)

    def validated(self) -> 'QuadratureSpec':
        """The same rule at double the order, used for self-validation."""
        return dataclasses.replace(self, order=2 * self.order, validation_points=2 * self.validation_points)

    def as_trapezoid(self) -> 'QuadratureSpec':
        return dataclasses.replace(self, scheme='trapezoid')

    def offsets(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node offsets t_k and weights a_k with E[f(Y)] ~ sum_k a_k f(mu + t_k), Y ~ N(mu, 1)."""
        if self.scheme == 'hermite':
            return _hermite_offsets(self.order)
        return _trapezoid_offsets(self.truncation_radius, self.validation_points)


def validate_quadrature(spec: QuadratureSpec) -> None:
    if spec.scheme not in VALID_SCHEMES:
        raise ValueError(f'Quadrature scheme {spec.scheme!r} is not one of {VALID_SCHEMES}.')
    if spec.order < 16:
        raise ValueError(f'Quadrature order must be at least 16, got {spec.order}.')
    if spec.truncation_radius < 8:
        raise ValueError(f'Truncation radius must be at least 8, got {spec.truncation_radius}.')
    if spec.validation_points < 16:
        raise ValueError(f'Trapezoid rule needs at least 16 points, got {spec.validation_points}.')


@functools.lru_cache(maxsize=None)
def _hermite_offsets(order: int) -> Tuple[np.ndarray, np.ndarray]:
    # x = mu + sqrt(2) u turns the physicists' weight exp(-u^2) into N(mu, 1)
    knots, weights = np.polynomial.hermite.hermgauss(order)
    knots = knots * np.sqrt(2.0)
    weights = weights / np.sqrt(np.pi)
    knots.setflags(write=False)
    weights.setflags(write=False)
    return knots, weights


@functools.lru_cache(maxsize=None)
def _trapezoid_offsets(radius: float, points: int) -> Tuple[np.ndarray, np.ndarray]:
    knots = np.linspace(-radius, radius, points)
    h = knots[1] - knots[0]
    weights = np.full(points, h)
    weights[0] = weights[-1] = 0.5 * h
    weights = weights * np.exp(-0.5 * knots ** 2) / np.sqrt(2.0 * np.pi)
    knots.setflags(write=False)
    weights.setflags(write=False)
    return knots, weights


def one_dimensional(func: Callable[..., Any]) -> Callable[..., Any]:
    """Reject a call whose `truth` model is not one-dimensional."""
    signature = inspect.signature(func)

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        truth = signature.bind_partial(*args, **kwargs).arguments.get('truth')
        if isinstance(truth, MixtureModel) and truth.dim != 1:
            raise UnsupportedDimensionError(
                f'{func.__name__} supports d = 1 only, got a model in R^{truth.dim}.')
        return func(*args, **kwargs)
    return wrapper


@dataclasses.dataclass(frozen=True)
class NodeGrid:
    """Quadrature nodes for every true component, kept in local coordinates.

    Attributes:
        anchors: (M*, 1) true centers.
        offsets: (1, K) node offsets from the anchor.
        weights: (M*, K) node weights, already divided by M*.
    """
    anchors: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.anchors + self.offsets


def node_grid(truth: MixtureModel, quad: QuadratureSpec) -> NodeGrid:
    offsets, weights = quad.offsets()
    return NodeGrid(
        anchors=truth.line[:, None],
        offsets=offsets[None, :],
        weights=np.tile(weights / truth.count, (truth.count, 1)),
    )


@one_dimensional
def expect_under_mixture(f: Callable[[np.ndarray], np.ndarray],
                         truth: MixtureModel,
                         quad: QuadratureSpec = QuadratureSpec()) -> float:
    """E_{mu*}[f(X)] for X ~ GMM(mu*) on the line.

    Args:
        f: Vectorized scalar function of x.
        truth: One-dimensional true mixture.
        quad: Quadrature rule.

    Returns:
        (1/M) sum_j of the rule applied to f around mu*_j.

    Raises:
        UnsupportedDimensionError: if truth is not one-dimensional.

    Examples:
        >>> import gmml
        >>> truth = gmml.MixtureModel.from_centers([3.0])
        >>> round(gmml.expect_under_mixture(lambda x: x ** 2, truth), 10)
        10.0
    """
    grid = node_grid(truth, quad)
    values = np.asarray(f(grid.points), dtype=float)
    return float(np.sum(grid.weights * values))


def cross_validate(evaluate: Callable[[QuadratureSpec], Any],
                   quad: QuadratureSpec,
                   atol: float = 1e-7) -> Any:
    """Evaluate under `quad` and under a second rule; raise if they disagree.

    The second rule is the doubled-order Hermite rule, or the Hermite rule when
    `quad` is itself the trapezoid validation scheme.

    Raises:
        ArithmeticError: if the two evaluations differ by more than atol.
    """
    primary = evaluate(quad)
    other = quad.validated() if quad.scheme == 'hermite' else dataclasses.replace(quad, scheme='hermite')
    secondary = evaluate(other)
    gap = float(np.max(np.abs(np.asarray(primary, dtype=float) - np.asarray(secondary, dtype=float))))
    if gap > atol:
        raise ArithmeticError(f'Quadrature rules disagree by {gap:.3e} (tolerance {atol:.1e}).')
    return primary
