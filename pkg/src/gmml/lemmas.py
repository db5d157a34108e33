"""Numerical checks of the inequalities behind the trapping argument.

Every check validates its hypotheses first and raises HypothesisViolation
listing all that fail, so a reported margin is only ever produced for a
configuration the inequality is claimed for.
"""
import csv
import dataclasses
import json
import logging
import math
from typing import IO, Any, Dict, List, Sequence

import numpy as np
from scipy.special import logsumexp

from gmml.experiments import trial_rng
from gmml.mixture import MixtureModel
from gmml.population import population_terms
from gmml.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)

PASS_TOLERANCE = 1e-9
GRID_POINTS = 10_000
WINDOW = (-50.0, 0.0)
TARGET = (1.0, 2.0)


class HypothesisViolation(ValueError):
    """Raised when a lemma is evaluated outside its hypotheses."""

    def __init__(self, lemma: str, violations: Sequence[str]):
        self.lemma = lemma
        self.violations = tuple(violations)
        super().__init__(f'{lemma}: violated hypotheses: {"; ".join(self.violations)}')


@dataclasses.dataclass(frozen=True)
class LemmaCheckReport:
    """One evaluated inequality value >= bound.

    Attributes:
        lemma: Which inequality was checked.
        configuration: The inputs, JSON-serializable.
        value: Left-hand side.
        bound: Right-hand side.
        edge: For the window search, the maximizer sat on the window edge.
    """
    lemma: str
    configuration: Dict[str, Any]
    value: float
    bound: float
    edge: bool = False

    @property
    def margin(self) -> float:
        return self.value - self.bound

    @property
    def passed(self) -> bool:
        return self.margin >= -PASS_TOLERANCE


def _require(lemma: str, checks: Dict[str, bool]) -> None:
    violations = [name for name, ok in checks.items() if not ok]
    if violations:
        raise HypothesisViolation(lemma, violations)


def _expected_weighted_x(truth: Sequence[float], candidates: Sequence[float], index: int,
                         quad: QuadratureSpec) -> float:
    terms = population_terms(candidates, MixtureModel.from_centers(list(truth)), quad)
    return float(terms.ewx[index])


def _check_index(candidates: Sequence[float], index: int) -> bool:
    return 0 <= index < len(candidates)


def check_lemma_general_calc(truth: Sequence[float],
                             candidates: Sequence[float],
                             index: int,
                             a: float,
                             match_divisor: float = 6.0,
                             quad: QuadratureSpec = QuadratureSpec()) -> LemmaCheckReport:
    """E w_i(X) X >= 0 for a candidate in [0, 4a] when the negative truth is covered.

    Hypotheses: a > log M + 3; every true center lies in (-inf, -10a) or (a, inf)
    with at least one in (a, 3a); every true center below -10a has a candidate
    within |mu*_j| / match_divisor; the tested candidate lies in [0, 4a].

    Truth and candidates are indexed by one set [M]; when their
    lengths differ, M is the larger of the two, so the hypothesis on a holds
    under either count.

    Raises:
        HypothesisViolation: listing every hypothesis that fails.
    """
    truth = [float(v) for v in truth]
    candidates = [float(v) for v in candidates]
    count = max(len(truth), len(candidates))
    _require('general_calc', {
        'index in range': _check_index(candidates, index),
        'a > log M + 3': a > math.log(count) + 3,
        'true centers outside [-10a, a]': all(v < -10 * a or v > a for v in truth),
        'a true center in (a, 3a)': any(a < v < 3 * a for v in truth),
        'negative true centers matched': all(
            any(abs(c - v) <= abs(v) / match_divisor for c in candidates) for v in truth if v < -10 * a),
        'candidate in [0, 4a]': _check_index(candidates, index) and 0 <= candidates[index] <= 4 * a,
    })
    value = _expected_weighted_x(truth, candidates, index, quad)
    configuration = {'truth': truth, 'candidates': candidates, 'index': index, 'a': a,
                     'match_divisor': match_divisor}
    return LemmaCheckReport('general_calc', configuration, value, 0.0)


def check_lemma_center_positive(a: float,
                                mu_star: float,
                                candidates: Sequence[float],
                                index: int,
                                strong: bool = False,
                                quad: QuadratureSpec = QuadratureSpec()) -> LemmaCheckReport:
    """Single Gaussian at mu* >= a pushes any nonnegative candidate to the right.

    With strong=False the bound is 0. With strong=True it is a / (5M) e^(-9a^2/2)
    and the extra hypotheses mu* <= 3a and mu_i <= 4a apply.

    Raises:
        HypothesisViolation: listing every hypothesis that fails.
    """
    candidates = [float(v) for v in candidates]
    count = len(candidates)
    checks = {
        'index in range': _check_index(candidates, index),
        'a > log M + 3': a > math.log(max(count, 1)) + 3,
        'mu* >= a': mu_star >= a,
        'candidate >= 0': _check_index(candidates, index) and candidates[index] >= 0,
    }
    if strong:
        checks['mu* <= 3a'] = mu_star <= 3 * a
        checks['candidate <= 4a'] = _check_index(candidates, index) and candidates[index] <= 4 * a
    lemma = 'center_positive_strong' if strong else 'center_positive'
    _require(lemma, checks)
    value = _expected_weighted_x([mu_star], candidates, index, quad)
    bound = a / (5 * count) * math.exp(-4.5 * a * a) if strong else 0.0
    configuration = {'a': a, 'mu_star': mu_star, 'candidates': candidates, 'index': index}
    return LemmaCheckReport(lemma, configuration, value, bound)


def check_lemma_center_negative(r: float,
                                candidates: Sequence[float],
                                index: int,
                                quad: QuadratureSpec = QuadratureSpec()) -> LemmaCheckReport:
    """A covered Gaussian at -r pulls a nonnegative candidate left by at most 3r e^(-r^2/18).

    Raises:
        HypothesisViolation: listing every hypothesis that fails.
    """
    candidates = [float(v) for v in candidates]
    _require('center_negative', {
        'index in range': _check_index(candidates, index),
        'r > 0': r > 0,
        'candidate >= 0': _check_index(candidates, index) and candidates[index] >= 0,
        'a candidate within r/6 of -r': any(abs(c + r) <= r / 6 for c in candidates),
    })
    value = _expected_weighted_x([-r], candidates, index, quad)
    bound = -3 * r * math.exp(-r * r / 18)
    return LemmaCheckReport('center_negative', {'r': r, 'candidates': candidates, 'index': index}, value, bound)


def _log_weight(x: np.ndarray, candidates: np.ndarray, index: int) -> np.ndarray:
    log_terms = -0.5 * (x[:, None] - candidates[None, :]) ** 2
    return log_terms[:, index] - logsumexp(log_terms, axis=1)


def check_lemma_wdifference(candidates: Sequence[float], index: int) -> LemmaCheckReport:
    """min over [1, 2] of w_i >= max over (-inf, 0] of w_i / (M e^2), for mu_i >= 0.

    Both sides are compared in log space on grids of GRID_POINTS points; the
    half-line is truncated to [-50, 0], and a maximizer on the truncation edge is
    flagged.

    Raises:
        HypothesisViolation: listing every hypothesis that fails.
    """
    candidates = [float(v) for v in candidates]
    _require('wdifference', {
        'index in range': _check_index(candidates, index),
        'candidate >= 0': _check_index(candidates, index) and candidates[index] >= 0,
    })
    centers = np.asarray(candidates)
    target = _log_weight(np.linspace(*TARGET, GRID_POINTS), centers, index)
    window_grid = np.linspace(*WINDOW, GRID_POINTS)
    window = _log_weight(window_grid, centers, index)
    argmax = int(np.argmax(window))
    edge = argmax == 0
    if edge:
        logger.warning('wdifference maximizer sits on the window edge x = %g for %s', WINDOW[0], candidates)
    bound = float(window[argmax]) - math.log(len(candidates)) - 2.0
    configuration = {'candidates': candidates, 'index': index, 'window_argmax': float(window_grid[argmax])}
    return LemmaCheckReport('wdifference', configuration, float(target.min()), bound, edge)


def _random_general_calc(rng: np.random.Generator, quad: QuadratureSpec) -> LemmaCheckReport:
    count = int(rng.integers(1, 7))
    a = math.log(count) + 3 + rng.uniform(0.5, 3.0)
    truth = [a * rng.uniform(1.01, 2.99)]
    for _ in range(count - 1):
        if rng.random() < 0.5:
            truth.append(rng.uniform(1.01 * a, 20 * a))
        else:
            truth.append(-rng.uniform(10.01 * a, 30 * a))
    candidates = [v + rng.uniform(-0.95, 0.95) * abs(v) / 6 for v in truth if v < -10 * a]
    index = len(candidates)
    candidates.append(rng.uniform(0, 4 * a))
    while len(candidates) < count:
        candidates.append(rng.uniform(-30 * a, 20 * a))
    return check_lemma_general_calc(truth, candidates, index, a, quad=quad)


def _random_center_positive(rng: np.random.Generator, strong: bool, quad: QuadratureSpec) -> LemmaCheckReport:
    count = int(rng.integers(1, 7))
    a = math.log(count) + 3 + rng.uniform(0.5, 3.0)
    mu_star = rng.uniform(a, 3 * a) if strong else rng.uniform(a, 10 * a)
    index = int(rng.integers(0, count))
    candidates = list(rng.uniform(-10 * a, 10 * a, count))
    candidates[index] = rng.uniform(0, 4 * a) if strong else rng.uniform(0, 10 * a)
    return check_lemma_center_positive(a, mu_star, candidates, index, strong, quad)


def _random_center_negative(rng: np.random.Generator, quad: QuadratureSpec) -> LemmaCheckReport:
    count = int(rng.integers(2, 7))
    r = rng.uniform(6.0, 40.0)
    candidates = list(rng.uniform(-2 * r, 2 * r, count))
    index, anchor = rng.choice(count, size=2, replace=False)
    candidates[index] = rng.uniform(0, 2 * r)
    candidates[anchor] = -r + rng.uniform(-0.95, 0.95) * r / 6
    return check_lemma_center_negative(r, candidates, int(index), quad)


def _random_wdifference(rng: np.random.Generator) -> LemmaCheckReport:
    count = int(rng.integers(1, 9))
    index = int(rng.integers(0, count))
    candidates = list(rng.uniform(-20.0, 20.0, count))
    candidates[index] = rng.uniform(0.0, 20.0)
    return check_lemma_wdifference(candidates, index)


LEMMAS = ('general_calc', 'center_positive', 'center_positive_strong', 'center_negative', 'wdifference')


def lemma_suite(seed: int = 0, per_lemma: int = 200, quad: QuadratureSpec = QuadratureSpec()) -> List[LemmaCheckReport]:
    """Randomized hypothesis-satisfying sweeps of every check, `per_lemma` configurations each."""
    if per_lemma < 1:
        raise ValueError(f'per_lemma must be positive, got {per_lemma}.')
    draws = {
        'general_calc': lambda rng: _random_general_calc(rng, quad),
        'center_positive': lambda rng: _random_center_positive(rng, False, quad),
        'center_positive_strong': lambda rng: _random_center_positive(rng, True, quad),
        'center_negative': lambda rng: _random_center_negative(rng, quad),
        'wdifference': _random_wdifference,
    }
    reports = []
    for offset, lemma in enumerate(LEMMAS):
        for k in range(per_lemma):
            reports.append(draws[lemma](trial_rng(seed, offset * per_lemma + k)))
    failures = sum(not r.passed for r in reports)
    logger.info('Lemma suite: %d checks, %d failures', len(reports), failures)
    return reports


def lemmas_to_csv(reports: Sequence[LemmaCheckReport], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(['lemma', 'value', 'bound', 'margin', 'pass', 'edge', 'configuration'])
    for r in reports:
        writer.writerow([r.lemma, format(r.value, '.17g'), format(r.bound, '.17g'), format(r.margin, '.17g'),
                         int(r.passed), int(r.edge), json.dumps(r.configuration, sort_keys=True)])
