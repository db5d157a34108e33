"""EM and first-order EM on sample and population objectives."""
import abc
import csv
import dataclasses
import logging
from typing import IO, Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from gmml.mixture import ArrayLike, MixtureModel, as_centers, as_points, responsibility_matrix, sample_log_likelihood
from gmml.population import (
    Centers,
    as_line,
    population_hessian,
    population_log_likelihood,
    population_terms,
)
from gmml.quadrature import QuadratureSpec, one_dimensional

logger = logging.getLogger(__name__)

LOCAL_MAXIMUM = 'local-maximum'
STRICT_SADDLE = 'strict-saddle'
INDETERMINATE = 'indeterminate'

TRAJECTORY_CAP = 10_000
THINNING = 10
ULP_FLOOR = 64


class Region(Protocol):
    """Anything that can count how many centers it holds."""

    def count(self, points: np.ndarray) -> int:
        """Number of entries of `points` inside the region."""


@dataclasses.dataclass(frozen=True)
class StoppingRule:
    """When to stop iterating.

    Attributes:
        max_iters: Iteration budget.
        step_tol: Threshold on ||mu(t+1) - mu(t)||_inf. Below 64 ulps of the
            largest coordinate it is raised to that floor.
        grad_tol: Optional threshold on the recorded gradient norm.
    """
    max_iters: int = 10_000
    step_tol: float = 1e-10
    grad_tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f'max_iters must be at least 1, got {self.max_iters}.')
        if not self.step_tol > 0:
            raise ValueError(f'step_tol must be positive, got {self.step_tol}.')
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ValueError(f'grad_tol must be positive, got {self.grad_tol}.')

    def movement_tolerance(self, mu: np.ndarray) -> float:
        scale = float(np.max(np.abs(mu))) if mu.size else 0.0
        return max(self.step_tol, ULP_FLOOR * float(np.finfo(float).eps) * scale)


@dataclasses.dataclass(frozen=True)
class StepResult:
    """Objective at the current iterate plus the next iterate."""
    log_likelihood: float
    grad_norm: float
    next_mu: np.ndarray


class Stepper(abc.ABC):
    """One EM-type update together with the objective it ascends."""

    name: str = ''

    @abc.abstractmethod
    def advance(self, mu: np.ndarray) -> StepResult:
        """Evaluate the objective at mu and compute the next iterate."""

    @abc.abstractmethod
    def coerce(self, mu: Centers) -> np.ndarray:
        """Bring user-supplied centers into the stepper's array layout."""

    def step(self, mu: Centers) -> np.ndarray:
        return self.advance(self.coerce(mu)).next_mu


@dataclasses.dataclass(frozen=True, eq=False)
class SampleEm(Stepper):
    """Classical EM on a finite sample in R^d."""
    data: np.ndarray
    name = 'em-sample'

    def coerce(self, mu: Centers) -> np.ndarray:
        if isinstance(mu, MixtureModel):
            return mu.centers.copy()
        return as_centers(mu)

    def advance(self, mu: np.ndarray) -> StepResult:
        points = as_points(self.data, mu.shape[1])
        log_terms = -0.5 * np.einsum('nmd,nmd->nm', points[:, None, :] - mu[None], points[:, None, :] - mu[None])
        log_r = log_terms - logsumexp(log_terms, axis=1, keepdims=True)
        r = np.exp(log_r)
        gradient = (r[:, :, None] * (points[:, None, :] - mu[None])).mean(axis=0)
        # normalize each column of log weights over the sample; no division by a total weight
        column = np.exp(log_r - logsumexp(log_r, axis=0, keepdims=True))
        return StepResult(
            log_likelihood=sample_log_likelihood(points, mu),
            grad_norm=float(np.linalg.norm(gradient)),
            next_mu=column.T @ points,
        )


@dataclasses.dataclass(frozen=True, eq=False)
class PopulationEm(Stepper):
    """EM with the population M-step mu_i <- E[w_i X] / E[w_i]."""
    truth: MixtureModel
    quad: QuadratureSpec = QuadratureSpec()
    name = 'em-population'

    def coerce(self, mu: Centers) -> np.ndarray:
        return as_line(mu)

    def advance(self, mu: np.ndarray) -> StepResult:
        terms = population_terms(mu, self.truth, self.quad)
        return StepResult(terms.log_likelihood, terms.grad_norm, terms.em_update())


@dataclasses.dataclass(frozen=True, eq=False)
class FirstOrderEm(Stepper):
    """Gradient ascent mu <- mu + s grad L(mu) with stepsize s in (0, 1)."""
    truth: MixtureModel
    s: float = 0.5
    quad: QuadratureSpec = QuadratureSpec()
    name = 'first-order-em'

    def __post_init__(self):
        validate_stepsize(self.s)

    def coerce(self, mu: Centers) -> np.ndarray:
        return as_line(mu)

    def advance(self, mu: np.ndarray) -> StepResult:
        terms = population_terms(mu, self.truth, self.quad)
        return StepResult(terms.log_likelihood, terms.grad_norm, mu + self.s * terms.gradient)


def validate_stepsize(s: float) -> None:
    if not 0.0 < s < 1.0:
        raise ValueError(f'Stepsize must lie in (0, 1), got {s}.')


STEPPERS = {
    SampleEm.name: SampleEm,
    PopulationEm.name: PopulationEm,
    FirstOrderEm.name: FirstOrderEm,
}


def make_stepper(name: str,
                 truth: Optional[MixtureModel] = None,
                 data: Optional[ArrayLike] = None,
                 s: float = 0.5,
                 quad: QuadratureSpec = QuadratureSpec()) -> Stepper:
    """Build a stepper by name.

    Raises:
        ValueError: for an unknown name or missing inputs.
    """
    if name not in STEPPERS:
        raise ValueError(f'Unknown stepper {name!r}; choose one of {sorted(STEPPERS)}.')
    if name == SampleEm.name:
        if data is None:
            raise ValueError('Sample EM needs data.')
        return SampleEm(np.asarray(data, dtype=float))
    if truth is None:
        raise ValueError(f'{name} needs the true model.')
    if name == PopulationEm.name:
        return PopulationEm(truth, quad)
    return FirstOrderEm(truth, s, quad)


def em_step_sample(data: ArrayLike, mu: ArrayLike) -> np.ndarray:
    """One EM step on a sample: mu_k <- sum_i w_k(x_i) x_i / sum_i w_k(x_i).

    Returns:
        (M, d) array of updated centers.

    Raises:
        ValueError: on empty data.
    """
    if np.size(data) == 0:
        raise ValueError('EM needs at least one datum.')
    stepper = SampleEm(np.asarray(data, dtype=float))
    return stepper.step(mu)


@one_dimensional
def em_step_population(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Population M-step mu_i <- ewx_i / ew_i."""
    return PopulationEm(truth, quad).step(mu)


@one_dimensional
def first_order_em_step(mu: Centers,
                        truth: MixtureModel,
                        s: float = 0.5,
                        quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """First-order EM step mu_i <- mu_i + s E[w_i(X)(X - mu_i)].

    Raises:
        ValueError: if s is outside (0, 1).
    """
    return FirstOrderEm(truth, s, quad).step(mu)


@one_dimensional
def jacobian_min_eigenvalue(mu: Centers,
                            truth: MixtureModel,
                            s: float = 0.5,
                            quad: QuadratureSpec = QuadratureSpec()) -> float:
    """Smallest eigenvalue of I + sH, the Jacobian of the first-order EM map."""
    validate_stepsize(s)
    hessian = population_hessian(mu, truth, quad)
    return float(np.linalg.eigvalsh(np.eye(hessian.shape[0]) + s * hessian)[0])


@dataclasses.dataclass
class EmTrajectory:
    """Recorded run of a stepper.

    Up to TRAJECTORY_CAP iterations every iterate is kept; past the cap only
    every THINNING-th iterate and the final one are retained, so `steps`
    names the iteration index of every record.
    """
    steps: List[int] = dataclasses.field(default_factory=list)
    iterates: List[np.ndarray] = dataclasses.field(default_factory=list)
    likelihoods: List[float] = dataclasses.field(default_factory=list)
    grad_norms: List[float] = dataclasses.field(default_factory=list)
    urn_counts: Optional[List[Tuple[int, ...]]] = None
    converged: bool = False
    exit_reason: str = ''

    @property
    def iterations(self) -> int:
        return self.steps[-1] if self.steps else 0

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def final_likelihood(self) -> float:
        return self.likelihoods[-1]

    @property
    def final_grad_norm(self) -> float:
        return self.grad_norms[-1]

    def is_monotone(self, slack: float = 1e-12) -> bool:
        return all(b >= a - slack for a, b in zip(self.likelihoods, self.likelihoods[1:]))

    def record(self, t: int, mu: np.ndarray, result: StepResult, regions: Optional[Sequence[Region]]) -> None:
        # past the cap an off-lattice record is only kept while it is the latest one
        if self.steps and self.steps[-1] > TRAJECTORY_CAP and self.steps[-1] % THINNING:
            self._pop()
        self.steps.append(t)
        self.iterates.append(np.array(mu, copy=True))
        self.likelihoods.append(result.log_likelihood)
        self.grad_norms.append(result.grad_norm)
        if regions is not None:
            if self.urn_counts is None:
                self.urn_counts = []
            self.urn_counts.append(tuple(region.count(np.ravel(mu)) for region in regions))

    def _pop(self) -> None:
        self.steps.pop()
        self.iterates.pop()
        self.likelihoods.pop()
        self.grad_norms.pop()
        if self.urn_counts:
            self.urn_counts.pop()


def run(mu0: Centers,
        stepper: Stepper,
        stop: StoppingRule = StoppingRule(),
        regions: Optional[Sequence[Region]] = None) -> EmTrajectory:
    """Iterate a stepper until the iterates stop moving or the budget runs out.

    Args:
        mu0: Initial centers.
        stepper: The update rule; it carries the truth or the data it needs.
        stop: Stopping rule.
        regions: Optional regions whose center counts are recorded per iteration.

    Returns:
        The trajectory; likelihood and gradient norm are recorded at every iterate.
    """
    mu = stepper.coerce(mu0)
    trajectory = EmTrajectory()
    result = stepper.advance(mu)
    trajectory.record(0, mu, result, regions)
    trajectory.exit_reason = 'max_iters'
    for t in range(1, stop.max_iters + 1):
        if stop.grad_tol is not None and result.grad_norm <= stop.grad_tol:
            trajectory.exit_reason = 'grad'
            break
        movement = float(np.max(np.abs(result.next_mu - mu)))
        mu = result.next_mu
        result = stepper.advance(mu)
        trajectory.record(t, mu, result, regions)
        if movement <= stop.movement_tolerance(mu):
            trajectory.exit_reason = 'step'
            break
    else:
        if stop.grad_tol is not None and result.grad_norm <= stop.grad_tol:
            trajectory.exit_reason = 'grad'
    trajectory.converged = trajectory.exit_reason != 'max_iters'
    if trajectory.converged:
        logger.debug('%s stopped on %s after %d iterations', stepper.name, trajectory.exit_reason,
                     trajectory.iterations)
    else:
        logger.info('%s exhausted %d iterations; final gradient norm %.3e', stepper.name, stop.max_iters,
                    trajectory.final_grad_norm)
    return trajectory


@dataclasses.dataclass(frozen=True, eq=False)
class CriticalPointReport:
    """Second-order verdict at a candidate critical point.

    Attributes:
        point: Centers examined.
        log_likelihood: L at the point.
        grad_norm: ||grad L|| at the point.
        hessian_eigenvalues: Ascending Hessian eigenvalues.
        kind: local-maximum, strict-saddle or indeterminate.
        degenerate: True when the verdict relied on probing flat directions.
    """
    point: np.ndarray
    log_likelihood: float
    grad_norm: float
    hessian_eigenvalues: Tuple[float, ...]
    kind: str
    degenerate: bool = False

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            'point': [float(v) for v in self.point],
            'log_likelihood': self.log_likelihood,
            'grad_norm': self.grad_norm,
            'hessian_eigenvalues': list(self.hessian_eigenvalues),
            'kind': self.kind,
            'degenerate': self.degenerate,
        }


@one_dimensional
def classify_critical_point(mu: Centers,
                            truth: MixtureModel,
                            quad: QuadratureSpec = QuadratureSpec(),
                            grad_tol: float = 1e-7,
                            eig_tol: float = 1e-5,
                            probe_radius: float = 0.05) -> CriticalPointReport:
    """Classify mu by its gradient norm and Hessian spectrum.

    A point with grad_norm above grad_tol is indeterminate. Otherwise an
    eigenvalue above eig_tol makes it a strict saddle and a spectrum below
    -eig_tol a local maximum. When the top eigenvalue falls in the dead zone
    [-eig_tol, eig_tol], the likelihood is probed at mu +- probe_radius * v for
    each dead-zone eigenvector v; a strict decrease in every probe gives a
    degenerate local maximum.
    """
    point = as_line(mu)
    terms = population_terms(point, truth, quad)
    eigenvalues, eigenvectors = np.linalg.eigh(population_hessian(point, truth, quad))
    spectrum = tuple(float(v) for v in eigenvalues)

    def report(kind: str, degenerate: bool = False) -> CriticalPointReport:
        return CriticalPointReport(point, terms.log_likelihood, terms.grad_norm, spectrum, kind, degenerate)

    if terms.grad_norm > grad_tol:
        return report(INDETERMINATE)
    top = eigenvalues[-1]
    if top > eig_tol:
        return report(STRICT_SADDLE)
    if top < -eig_tol:
        return report(LOCAL_MAXIMUM)
    flat = eigenvectors[:, eigenvalues >= -eig_tol]
    base = terms.log_likelihood
    for v in flat.T:
        for sign in (1.0, -1.0):
            if population_log_likelihood(point + sign * probe_radius * v, truth, quad) >= base:
                return report(INDETERMINATE)
    return report(LOCAL_MAXIMUM, degenerate=True)


def trajectory_to_csv(trajectory: EmTrajectory, stream: IO[str]) -> None:
    """Write t, mu_1..mu_M, loglik, grad_norm, n1, n2, n3 with 17 significant digits."""
    count = int(np.size(trajectory.iterates[0])) if trajectory.iterates else 0
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(['t', *[f'mu_{i + 1}' for i in range(count)], 'loglik', 'grad_norm', 'n1', 'n2', 'n3'])
    for index, t in enumerate(trajectory.steps):
        counts: Sequence[Any] = ('', '', '')
        if trajectory.urn_counts is not None:
            counts = (tuple(trajectory.urn_counts[index]) + ('', '', ''))[:3]
        writer.writerow([
            t,
            *[format_float(v) for v in np.ravel(trajectory.iterates[index])],
            format_float(trajectory.likelihoods[index]),
            format_float(trajectory.grad_norms[index]),
            *counts,
        ])


def format_float(value: float) -> str:
    return format(float(value), '.17g')
