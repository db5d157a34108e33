"""Population log-likelihood and its derivatives on the line.

All quantities are expectations under X ~ GMM(mu*) and are evaluated with the
rule of a QuadratureSpec placed around every true center. Distances to the
candidate centers are formed as (mu*_j - mu_i) + t_k, so the integrands stay
local even when the centers sit near 1e9.
"""
import dataclasses
import math
from typing import Iterator, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from gmml.mixture import LOG_2PI, MixtureModel, ArrayLike
from gmml.quadrature import NodeGrid, QuadratureSpec, node_grid, one_dimensional

Centers = Union[ArrayLike, MixtureModel]


def as_line(mu: Centers) -> np.ndarray:
    """Candidate centers on the line as a flat float array."""
    if isinstance(mu, MixtureModel):
        return mu.line.astype(float)
    arr = np.asarray(mu, dtype=float)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    arr = np.atleast_1d(arr)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f'Candidate centers must be a non-empty list of reals, got shape {np.shape(mu)}.')
    if not np.all(np.isfinite(arr)):
        raise ValueError('Candidate centers must be finite.')
    return arr


def expected_log_likelihood_limit(count: int) -> float:
    """-1/2 - log(M sqrt(2 pi)): value of the global maximum once components stop overlapping."""
    return -0.5 - math.log(count) - 0.5 * LOG_2PI


@dataclasses.dataclass(frozen=True, eq=False)
class WeightMoments:
    """ew_i = E[w_i(X)] and ewx_i = E[w_i(X) X]."""
    ew: np.ndarray
    ewx: np.ndarray

    def m_step(self) -> np.ndarray:
        return self.ewx / self.ew


@dataclasses.dataclass(frozen=True, eq=False)
class PopulationTerms:
    """Everything one quadrature pass yields at a candidate mu.

    Attributes:
        mu: Candidate centers.
        log_likelihood: L(mu).
        ew: E[w_i(X)].
        gradient: E[w_i(X)(X - mu_i)].
        em_shift: E[w_i(X)(X - mu_i)] / E[w_i(X)], normalized in log space so that
            it stays finite when E[w_i(X)] underflows.
    """
    mu: np.ndarray
    log_likelihood: float
    ew: np.ndarray
    gradient: np.ndarray
    em_shift: np.ndarray

    @property
    def ewx(self) -> np.ndarray:
        return self.gradient + self.mu * self.ew

    @property
    def moments(self) -> WeightMoments:
        return WeightMoments(ew=self.ew, ewx=self.ewx)

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    def em_update(self) -> np.ndarray:
        # mu + E[w(X - mu)] / E[w] equals E[wX] / E[w] without forming wX at large scale
        return self.mu + self.em_shift


def _local(mu: np.ndarray, grid: NodeGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distances d = x - mu_i, log-normalizers and log-responsibilities at every node.

    Shapes: d and log_r are (M*, K, M), lse is (M*, K).
    """
    d = (grid.anchors - mu[None, :])[:, None, :] + grid.offsets[:, :, None]
    log_terms = -0.5 * d * d
    lse = logsumexp(log_terms, axis=2)
    return d, lse, log_terms - lse[:, :, None]


@one_dimensional
def population_terms(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> PopulationTerms:
    """Log-likelihood, weight masses and gradient from a single quadrature pass."""
    mu_line = as_line(mu)
    grid = node_grid(truth, quad)
    d, lse, log_r = _local(mu_line, grid)
    r = np.clip(np.exp(log_r), 0.0, 1.0)
    w = grid.weights[:, :, None]
    with np.errstate(divide='ignore'):
        log_wr = np.log(w) + log_r
    log_ew = logsumexp(log_wr, axis=(0, 1))
    log_likelihood = float(np.sum(grid.weights * lse)) - math.log(mu_line.size) - 0.5 * LOG_2PI
    return PopulationTerms(
        mu=mu_line,
        log_likelihood=log_likelihood,
        ew=np.sum(w * r, axis=(0, 1)),
        gradient=np.sum(w * r * d, axis=(0, 1)),
        em_shift=np.sum(np.exp(log_wr - log_ew) * d, axis=(0, 1)),
    )


def population_log_likelihood(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> float:
    """L(mu) = E_{mu*} log((1/M) sum_i phi(X | mu_i, 1)).

    The candidate count M may differ from the number of true components.

    Raises:
        UnsupportedDimensionError: if truth is not one-dimensional.
    """
    return population_terms(mu, truth, quad).log_likelihood


def weight_moments(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> WeightMoments:
    """Numerator and denominator of the population M-step."""
    return population_terms(mu, truth, quad).moments


def population_gradient(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """grad L(mu)_i = E[w_i(X)(X - mu_i)] = ewx_i - mu_i ew_i."""
    return population_terms(mu, truth, quad).gradient


@one_dimensional
def q_matrix(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """The positive semidefinite part Q of the Hessian decomposition.

    Q_ii = E[(w_i - w_i^2)(X - mu_i)^2] and Q_ij = -E[w_i w_j (X - mu_i)(X - mu_j)].
    At every node the contribution diag(w d^2) - (w d)(w d)^T is PSD because the
    weights sum to one, so Q is PSD up to rounding.
    """
    mu_line = as_line(mu)
    grid = node_grid(truth, quad)
    d, _, log_r = _local(mu_line, grid)
    rd = np.clip(np.exp(log_r), 0.0, 1.0) * d
    diag = np.einsum('jk,jkm->m', grid.weights, rd * d)
    outer = np.einsum('jk,jkm,jkn->mn', grid.weights, rd, rd)
    q = np.diag(diag) - outer
    return 0.5 * (q + q.T)


@one_dimensional
def population_hessian(mu: Centers, truth: MixtureModel, quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Hessian of L as Q - diag(E[w_i]).

    Raises:
        UnsupportedDimensionError: if truth is not one-dimensional.
    """
    ew = population_terms(mu, truth, quad).ew
    return q_matrix(mu, truth, quad) - np.diag(ew)


def _chunks(total: int, size: int) -> Iterator[slice]:
    for start in range(0, total, size):
        yield slice(start, min(start + size, total))


@one_dimensional
def population_batch(mus: ArrayLike,
                     truth: MixtureModel,
                     quad: QuadratureSpec = QuadratureSpec(),
                     chunk: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    """L and ||grad L|| for many candidate configurations at once.

    Args:
        mus: (P, M) array, one candidate configuration per row.
        truth: One-dimensional true mixture.
        quad: Quadrature rule.
        chunk: Configurations evaluated per vectorized block.

    Returns:
        Arrays of log-likelihoods and gradient norms, both of length P.
    """
    configs = np.asarray(mus, dtype=float)
    if configs.ndim != 2:
        raise ValueError(f'Expected a (P, M) array of configurations, got shape {configs.shape}.')
    grid = node_grid(truth, quad)
    count = configs.shape[1]
    loglik = np.empty(configs.shape[0])
    grad_norm = np.empty(configs.shape[0])
    for part in _chunks(configs.shape[0], chunk):
        block = configs[part]
        d = (grid.anchors[None, :, :] - block[:, None, :])[:, :, None, :] + grid.offsets[None, :, :, None]
        log_terms = -0.5 * d * d
        lse = logsumexp(log_terms, axis=3)
        r = np.exp(log_terms - lse[..., None])
        loglik[part] = np.einsum('jk,pjk->p', grid.weights, lse) - math.log(count) - 0.5 * LOG_2PI
        grad = np.einsum('jk,pjkm->pm', grid.weights, r * d)
        grad_norm[part] = np.linalg.norm(grad, axis=1)
    return loglik, grad_norm
