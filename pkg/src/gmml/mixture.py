"""Equal-weight isotropic Gaussian mixtures: densities, weights and sampling."""
import dataclasses
import json
import math
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

ArrayLike = Union[float, Sequence[float], Sequence[Sequence[float]], np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)


def as_centers(centers: ArrayLike) -> np.ndarray:
    """Coerce centers to an (M, d) float array.

    A flat sequence is read as M one-dimensional centers.

    Raises:
        ValueError: if there is no center or a coordinate is not finite.
    """
    arr = np.asarray(centers, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f'Centers must be a non-empty M x d array, got shape {arr.shape}.')
    if not np.all(np.isfinite(arr)):
        raise ValueError('Every center coordinate must be finite.')
    return arr


def as_points(x: ArrayLike, dim: int) -> np.ndarray:
    """Coerce one point or a batch of points to an (n, d) float array."""
    arr = np.asarray(x, dtype=float)
    if dim == 1 and arr.ndim <= 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f'Dimension mismatch: points of shape {np.shape(x)} against centers in R^{dim}.')
    return arr


@dataclasses.dataclass(frozen=True, eq=False)
class MixtureModel:
    """GMM(mu*): M centers in R^d, weights 1/M each, identity covariance.

    Attributes:
        centers: (M, d) array of component means.
    """
    centers: np.ndarray

    def __post_init__(self):
        arr = as_centers(self.centers)
        arr.setflags(write=False)
        object.__setattr__(self, 'centers', arr)

    @classmethod
    def from_centers(cls, centers: ArrayLike) -> 'MixtureModel':
        return cls(as_centers(centers))

    @property
    def dim(self) -> int:
        return int(self.centers.shape[1])

    @property
    def count(self) -> int:
        return int(self.centers.shape[0])

    @property
    def line(self) -> np.ndarray:
        """Centers of a one-dimensional model as a flat array."""
        if self.dim != 1:
            raise ValueError(f'Model lives in R^{self.dim}, not on the line.')
        return self.centers[:, 0]

    def with_centers(self, centers: ArrayLike) -> 'MixtureModel':
        return MixtureModel(as_centers(centers))

    def sorted(self) -> 'MixtureModel':
        order = np.lexsort(self.centers.T[::-1])
        return MixtureModel(self.centers[order])

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, MixtureModel):
            return NotImplemented
        return self.centers.shape == other.centers.shape and bool(np.array_equal(self.centers, other.centers))

    def __hash__(self) -> int:
        return hash((self.centers.shape, self.centers.tobytes()))

    def __repr__(self) -> str:
        return f'gmml.MixtureModel(centers={self.centers.tolist()!r})'

    def to_json_dict(self) -> Dict[str, Any]:
        return {'dim': self.dim, 'centers': self.centers.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())

    @classmethod
    def from_json_dict(cls, payload: Dict[str, Any]) -> 'MixtureModel':
        centers = as_centers(payload['centers'])
        if centers.shape[1] != int(payload['dim']):
            raise ValueError(f"Declared dim {payload['dim']} disagrees with centers of width {centers.shape[1]}.")
        return cls(centers)

    @classmethod
    def from_json(cls, text: str) -> 'MixtureModel':
        return cls.from_json_dict(json.loads(text))


@dataclasses.dataclass(frozen=True)
class Responsibilities:
    """Posterior membership weights w_i(x) of a single point."""
    weights: Tuple[float, ...]

    def __post_init__(self):
        total = math.fsum(self.weights)
        if any(w < 0.0 or w > 1.0 for w in self.weights) or abs(total - 1.0) > 1e-12:
            raise ValueError(f'Weights {self.weights!r} do not form a probability vector.')

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, index: int) -> float:
        return self.weights[index]


@dataclasses.dataclass(frozen=True)
class LabeledSample:
    """A draw from GMM(mu*) together with its latent component Z."""
    point: Tuple[float, ...]
    component: int


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum('nmd,nmd->nm', diff, diff)


def log_gaussian_pdf(x: ArrayLike, mu: ArrayLike) -> float:
    """Log density of N(mu, I) at x.

    Args:
        x: Point in R^d.
        mu: Mean in R^d.

    Returns:
        -d/2 log(2 pi) - ||x - mu||^2 / 2.

    Raises:
        ValueError: if x and mu differ in dimension.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    mu_arr = np.atleast_1d(np.asarray(mu, dtype=float))
    if x_arr.shape != mu_arr.shape or x_arr.ndim != 1:
        raise ValueError(f'Dimension mismatch between x {x_arr.shape} and mu {mu_arr.shape}.')
    diff = x_arr - mu_arr
    return float(-0.5 * x_arr.size * LOG_2PI - 0.5 * np.dot(diff, diff))


def log_mixture_density_batch(points: ArrayLike, centers: ArrayLike) -> np.ndarray:
    """Log mixture density at each row of `points` under equal-weight centers."""
    c = as_centers(centers)
    p = as_points(points, c.shape[1])
    log_terms = -0.5 * _squared_distances(p, c)
    return logsumexp(log_terms, axis=1) - math.log(c.shape[0]) - 0.5 * c.shape[1] * LOG_2PI


def log_mixture_density(x: ArrayLike, model: MixtureModel) -> float:
    """log((1/M) sum_j phi(x | mu_j, I)), evaluated with the max-shift identity.

    Raises:
        ValueError: if x does not live in the model's dimension.
    """
    point = as_points(x, model.dim)
    if point.shape[0] != 1:
        raise ValueError('log_mixture_density takes a single point; use log_mixture_density_batch.')
    return float(log_mixture_density_batch(point, model.centers)[0])


def responsibility_matrix(points: ArrayLike, centers: ArrayLike) -> np.ndarray:
    """Membership weights for a batch of points, shape (n, M), rows summing to one."""
    c = as_centers(centers)
    p = as_points(points, c.shape[1])
    log_terms = -0.5 * _squared_distances(p, c)
    log_terms -= log_terms.max(axis=1, keepdims=True)
    weights = np.exp(log_terms)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.clip(weights, 0.0, 1.0)


def responsibilities(x: ArrayLike, centers: ArrayLike) -> Responsibilities:
    """E-step membership weights of a single point.

    Raises:
        ValueError: if the center list is empty or dimensions disagree.
    """
    if np.size(centers) == 0:
        raise ValueError('Cannot compute responsibilities without centers.')
    c = as_centers(centers)
    point = as_points(x, c.shape[1])
    if point.shape[0] != 1:
        raise ValueError('responsibilities takes a single point; use responsibility_matrix.')
    return Responsibilities(tuple(float(w) for w in responsibility_matrix(point, c)[0]))


def sample_points(model: MixtureModel, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Draw n points and their latent labels as arrays of shape (n, d) and (n,)."""
    if n < 0:
        raise ValueError(f'Sample size must be non-negative, got {n}.')
    labels = rng.integers(0, model.count, size=n)
    noise = rng.standard_normal(size=(n, model.dim))
    return model.centers[labels] + noise, labels


def sample(model: MixtureModel, n: int, rng: np.random.Generator) -> List[LabeledSample]:
    """Two-step sampling: Z uniform on [M], then a point from N(mu*_Z, I).

    Args:
        model: The true mixture.
        n: Number of draws.
        rng: A numpy generator; the draws are a deterministic function of its state.

    Returns:
        The labeled draws in order.
    """
    points, labels = sample_points(model, n, rng)
    return [LabeledSample(tuple(float(v) for v in p), int(z)) for p, z in zip(points, labels)]


def min_separation(model: MixtureModel) -> float:
    """Smallest Euclidean distance between two distinct centers.

    Raises:
        ValueError: for a single-component model, where separation is undefined.
    """
    if model.count < 2:
        raise ValueError('Separation is undefined for a single-component model.')
    dist = np.sqrt(_squared_distances(model.centers, model.centers))
    iu = np.triu_indices(model.count, k=1)
    return float(dist[iu].min())


def sample_log_likelihood(data: ArrayLike, mu: ArrayLike) -> float:
    """Average log mixture density of the data under centers `mu`.

    Raises:
        ValueError: on empty data.
    """
    if np.size(data) == 0:
        raise ValueError('Sample log-likelihood needs at least one datum.')
    c = as_centers(mu)
    # sort the per-point component terms so that permuting centers is bit-exact
    p = as_points(data, c.shape[1])
    log_terms = np.sort(-0.5 * _squared_distances(p, c), axis=1)
    values = logsumexp(log_terms, axis=1) - math.log(c.shape[0]) - 0.5 * c.shape[1] * LOG_2PI
    return float(np.mean(values))
