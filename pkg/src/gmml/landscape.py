"""Likelihood surfaces, face suprema of region D and critical-point search."""
import csv
import dataclasses
import logging
from typing import IO, Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage, optimize

from gmml.constructions import ThreeComponentSpec, three_component
from gmml.em import CriticalPointReport, classify_critical_point, format_float
from gmml.mixture import MixtureModel
from gmml.population import population_batch, population_hessian, population_terms
from gmml.quadrature import QuadratureSpec, one_dimensional

logger = logging.getLogger(__name__)

BOX_FACTOR = 5.0


@dataclasses.dataclass(frozen=True, eq=False)
class BoundaryValues:
    """L at the interior point and the suprema over the three faces of D.

    Attributes:
        v0: L(0, gamma R, gamma R).
        v1: Supremum over the face mu_1 = gamma R / 3.
        v2: Supremum over the face mu_2 = 2 gamma R / 3.
        v3: Supremum over the face mu_3 = 2 gamma R / 3.
        argmaxes: The interior point followed by the three face maximizers.
        converged: Per face, whether local refinement converged.
    """
    v0: float
    v1: float
    v2: float
    v3: float
    argmaxes: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    converged: Tuple[bool, bool, bool]

    @property
    def margin(self) -> float:
        return self.v0 - max(self.v1, self.v2, self.v3)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            'v0': self.v0,
            'v1': self.v1,
            'v2': self.v2,
            'v3': self.v3,
            'margin': self.margin,
            'argmaxes': [[float(v) for v in point] for point in self.argmaxes],
            'converged': list(self.converged),
        }


@dataclasses.dataclass(frozen=True)
class _Face:
    fixed_index: int
    fixed_value: float
    bounds: Tuple[Tuple[float, float], Tuple[float, float]]

    @property
    def free(self) -> Tuple[int, int]:
        free = tuple(i for i in range(3) if i != self.fixed_index)
        return free[0], free[1]

    def embed(self, free_values: np.ndarray) -> np.ndarray:
        """Map (P, 2) free coordinates to (P, 3) points on the face."""
        values = np.atleast_2d(free_values)
        points = np.empty((values.shape[0], 3))
        points[:, self.fixed_index] = self.fixed_value
        points[:, list(self.free)] = values
        return points


def _faces(spec: ThreeComponentSpec) -> Tuple[_Face, _Face, _Face]:
    box = BOX_FACTOR * spec.gamma * spec.R
    low = (-box, spec.lower_face)
    high = (spec.upper_face, box)
    return (
        _Face(0, spec.lower_face, (high, high)),
        _Face(1, spec.upper_face, (low, high)),
        _Face(2, spec.upper_face, (low, high)),
    )


def _face_supremum(face: _Face,
                   truth: MixtureModel,
                   quad: QuadratureSpec,
                   resolution: int,
                   starts: int) -> Tuple[float, np.ndarray, bool]:
    axes = [np.linspace(lo, hi, resolution) for lo, hi in face.bounds]
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, 2)
    values, _ = population_batch(face.embed(grid), truth, quad)
    order = np.argsort(values)[::-1][:starts]
    best_value = float(values[order[0]])
    best_point = face.embed(grid[order[0]])[0]
    free = list(face.free)

    def objective(z: np.ndarray) -> Tuple[float, np.ndarray]:
        terms = population_terms(face.embed(z)[0], truth, quad)
        return -terms.log_likelihood, -terms.gradient[free]

    converged = False
    for index in order:
        result = optimize.minimize(objective, grid[index], jac=True, method='L-BFGS-B', bounds=face.bounds)
        if not result.success:
            continue
        converged = True
        if -result.fun > best_value:
            best_value = float(-result.fun)
            best_point = face.embed(result.x)[0]
    if not converged:
        logger.warning('Refinement on face mu_%d = %.6g did not converge; keeping the grid maximum',
                       face.fixed_index + 1, face.fixed_value)
    return best_value, best_point, converged


def boundary_values(spec: ThreeComponentSpec,
                    quad: QuadratureSpec = QuadratureSpec(),
                    resolution: int = 50,
                    starts: int = 5) -> BoundaryValues:
    """v0 and the face suprema v1, v2, v3 of region D.

    Each face is searched on a resolution x resolution grid inside the box
    [-5 gamma R, 5 gamma R]^3, then the best `starts` grid points are refined
    with L-BFGS-B under the face bounds.

    Args:
        spec: Three-component construction.
        quad: Quadrature rule.
        resolution: Grid points per free coordinate, at least 50.
        starts: Number of grid maxima refined per face.

    Raises:
        ValueError: if resolution < 50 or starts < 1.
    """
    if resolution < 50:
        raise ValueError(f'Face grids need at least 50 points per axis, got {resolution}.')
    if starts < 1:
        raise ValueError(f'At least one refinement start is needed, got {starts}.')
    truth = three_component(spec)
    interior = np.array([0.0, spec.gamma * spec.R, spec.gamma * spec.R])
    v0 = population_terms(interior, truth, quad).log_likelihood
    results = [_face_supremum(face, truth, quad, resolution, starts) for face in _faces(spec)]
    logger.info('Boundary values for R=%g gamma=%g: v0=%.6f faces=%s', spec.R, spec.gamma, v0,
                [round(r[0], 6) for r in results])
    return BoundaryValues(
        v0=v0,
        v1=results[0][0],
        v2=results[1][0],
        v3=results[2][0],
        argmaxes=(interior, results[0][1], results[1][1], results[2][1]),
        converged=(results[0][2], results[1][2], results[2][2]),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """L and ||grad L|| over a square grid of two candidate centers.

    `loglik[i, j]` is evaluated at (axis[i], axis[j]); rows run over mu_1.
    """
    axis: np.ndarray
    loglik: np.ndarray
    grad_norm: np.ndarray

    @property
    def step(self) -> float:
        return float(self.axis[1] - self.axis[0])

    def rows(self):
        for i, mu1 in enumerate(self.axis):
            for j, mu2 in enumerate(self.axis):
                yield float(mu1), float(mu2), float(self.loglik[i, j]), float(self.grad_norm[i, j])


@one_dimensional
def surface_grid(truth: MixtureModel,
                 bounds: Tuple[float, float] = (-10.0, 10.0),
                 step: float = 0.1,
                 quad: QuadratureSpec = QuadratureSpec()) -> SurfaceGrid:
    """Evaluate the two-center likelihood map on [lo, hi]^2 at the given step.

    Raises:
        ValueError: if the bounds are empty or the step is not positive.
    """
    lo, hi = bounds
    if not hi > lo:
        raise ValueError(f'Surface bounds must satisfy lo < hi, got {bounds}.')
    if not step > 0:
        raise ValueError(f'Grid step must be positive, got {step}.')
    axis = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    mu1, mu2 = np.meshgrid(axis, axis, indexing='ij')
    loglik, grad_norm = population_batch(np.column_stack([mu1.ravel(), mu2.ravel()]), truth, quad)
    shape = (axis.size, axis.size)
    return SurfaceGrid(axis, loglik.reshape(shape), grad_norm.reshape(shape))


@one_dimensional
def refine_critical_point(mu0: Sequence[float],
                          truth: MixtureModel,
                          quad: QuadratureSpec = QuadratureSpec()) -> Optional[np.ndarray]:
    """Solve grad L = 0 from mu0 with the analytic Hessian as Jacobian; None on failure."""

    def gradient(mu: np.ndarray) -> np.ndarray:
        return population_terms(mu, truth, quad).gradient

    def hessian(mu: np.ndarray) -> np.ndarray:
        return population_hessian(mu, truth, quad)

    result = optimize.root(gradient, np.asarray(mu0, dtype=float), jac=hessian, method='hybr')
    if not result.success:
        return None
    return result.x


@one_dimensional
def find_critical_points(truth: MixtureModel,
                         surface: SurfaceGrid,
                         quad: QuadratureSpec = QuadratureSpec(),
                         grad_tol: float = 1e-7,
                         merge_radius: float = 1e-4) -> List[CriticalPointReport]:
    """Refine local minima of the gradient-norm map into classified critical points.

    Candidates are interior grid points whose gradient norm is minimal in their
    3 x 3 neighbourhood. Each is refined by root finding; refined points outside
    the grid bounds or above grad_tol are dropped and duplicates within
    merge_radius are merged.
    """
    g = surface.grad_norm
    minima = g == ndimage.minimum_filter(g, size=3, mode='nearest')
    minima[[0, -1], :] = False
    minima[:, [0, -1]] = False
    lo, hi = float(surface.axis[0]), float(surface.axis[-1])
    found: List[np.ndarray] = []
    for i, j in zip(*np.nonzero(minima)):
        point = refine_critical_point([surface.axis[i], surface.axis[j]], truth, quad)
        if point is None or np.any(point < lo) or np.any(point > hi):
            continue
        if any(np.max(np.abs(point - other)) <= merge_radius for other in found):
            continue
        found.append(point)
    reports = [classify_critical_point(point, truth, quad, grad_tol=grad_tol) for point in found]
    reports = [r for r in reports if r.grad_norm <= grad_tol]
    logger.info('Found %d critical points from %d grid candidates', len(reports), int(minima.sum()))
    return sorted(reports, key=lambda r: tuple(r.point))


def surface_to_csv(surface: SurfaceGrid, critical_points: Sequence[CriticalPointReport], stream: IO[str]) -> None:
    """Grid rows in row-major order, then one flagged row per refined critical point."""
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(['mu_1', 'mu_2', 'loglik', 'grad_norm', 'critical'])
    for row in surface.rows():
        writer.writerow([*map(format_float, row), ''])
    for report in critical_points:
        mu1, mu2 = report.point
        writer.writerow([format_float(mu1), format_float(mu2), format_float(report.log_likelihood),
                         format_float(report.grad_norm), report.kind])
