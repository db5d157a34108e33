"""Seeded Monte Carlo harnesses: failure rates, trapping and saddle avoidance."""
import concurrent.futures
import csv
import dataclasses
import logging
import math
import os
from typing import IO, Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy.stats import norm

from gmml.constructions import DiffuseSpec, TreeConstructionSpec, make_diffuse
from gmml.em import (
    STRICT_SADDLE,
    EmTrajectory,
    FirstOrderEm,
    PopulationEm,
    Stepper,
    StoppingRule,
    classify_critical_point,
    format_float,
    jacobian_min_eigenvalue,
    make_stepper,
    run,
)
from gmml.initialization import InitClassification, classify_init, event_e_holds, init_centers, random_init
from gmml.mixture import LabeledSample, MixtureModel
from gmml.population import population_log_likelihood, population_terms
from gmml.quadrature import QuadratureSpec

logger = logging.getLogger(__name__)

THREADS_ENV = 'GMML_THREADS'

T = TypeVar('T')


def default_threads() -> int:
    """Thread count from GMML_THREADS, else 1."""
    value = os.environ.get(THREADS_ENV, '').strip()
    if not value:
        return 1
    threads = int(value)
    if threads < 1:
        raise ValueError(f'{THREADS_ENV} must be a positive integer, got {value!r}.')
    return threads


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of trial `index`, independent of how trials are scheduled."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def parallel_map(func: Callable[[int], T], count: int, threads: Optional[int] = None) -> List[T]:
    """Apply func to 0..count-1, on up to `threads` workers, returning results in index order."""
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError(f'threads must be positive, got {threads}.')
    if threads == 1 or count <= 1:
        return [func(i) for i in range(count)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(func, range(count)))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval of a binomial proportion.

    Raises:
        ValueError: if trials < 1 or successes is outside 0..trials.
    """
    if trials < 1:
        raise ValueError(f'At least one trial is needed, got {trials}.')
    if not 0 <= successes <= trials:
        raise ValueError(f'successes must lie in 0..{trials}, got {successes}.')
    z = float(norm.ppf(0.5 + confidence / 2))
    p = successes / trials
    denominator = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denominator
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denominator
    return max(0.0, center - half), min(1.0, center + half)


@dataclasses.dataclass(frozen=True, eq=False)
class TrialRecord:
    """Outcome of one randomly initialized run."""
    index: int
    seed: Tuple[int, int]
    init: Tuple[LabeledSample, ...]
    event_e: bool
    classification: Optional[InitClassification]
    final_likelihood: float
    success: bool
    converged: bool
    iterations: int
    final: Tuple[float, ...] = ()

    CSV_HEADER = ('index', 'seed', 'init', 'labels', 'event_e', 'good', 'reason', 'final_loglik', 'success',
                  'converged', 'iterations')

    def csv_row(self) -> List[Any]:
        good = '' if self.classification is None else int(self.classification.good)
        reason = '' if self.classification is None else self.classification.reason
        return [
            self.index,
            f'{self.seed[0]}:{self.seed[1]}',
            ';'.join(format_float(s.point[0]) for s in self.init),
            ';'.join(str(s.component) for s in self.init),
            int(self.event_e),
            good,
            reason,
            format_float(self.final_likelihood),
            int(self.success),
            int(self.converged),
            self.iterations,
        ]


def trials_to_csv(records: Sequence[TrialRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(TrialRecord.CSV_HEADER)
    for record in records:
        writer.writerow(record.csv_row())


@dataclasses.dataclass(frozen=True)
class McSummary:
    """Aggregate of a failure-rate experiment.

    Attributes:
        trials: Number of trials.
        successes: Trials ending within success_margin of L(mu*).
        good_inits: Trials whose initialization the tree rules accept.
        rule_b_goods: Good initializations accepted because several centers shared one urn.
        event_e: Trials on which E_M held.
        truth_likelihood: L(mu*).
        c_gap: L(mu*) minus the best final likelihood of a failed trial, None without failures.
        coupling_counterexamples: Successful trials under E_M with a bad initialization.
        unconverged: Trials that exhausted max_iters.
    """
    trials: int
    successes: int
    good_inits: int
    rule_b_goods: int
    event_e: int
    truth_likelihood: float
    c_gap: Optional[float]
    coupling_counterexamples: int
    unconverged: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials

    @property
    def good_init_rate(self) -> float:
        return self.good_inits / self.trials

    @property
    def event_e_rate(self) -> float:
        return self.event_e / self.trials

    @property
    def success_interval(self) -> Tuple[float, float]:
        return wilson_interval(self.successes, self.trials)

    @property
    def good_init_interval(self) -> Tuple[float, float]:
        return wilson_interval(self.good_inits, self.trials)

    def to_json_dict(self) -> Dict[str, Any]:
        low, high = self.success_interval
        good_low, good_high = self.good_init_interval
        return {
            'trials': self.trials,
            'success_rate': self.success_rate,
            'good_init_rate': self.good_init_rate,
            'event_e_rate': self.event_e_rate,
            'wilson_low': low,
            'wilson_high': high,
            'good_init_wilson_low': good_low,
            'good_init_wilson_high': good_high,
            'rule_b_goods': self.rule_b_goods,
            'truth_loglik': self.truth_likelihood,
            'c_gap': self.c_gap,
            'coupling_counterexamples': self.coupling_counterexamples,
            'unconverged': self.unconverged,
        }


def _population_stepper(stepper: Stepper) -> Stepper:
    if not isinstance(stepper, (PopulationEm, FirstOrderEm)):
        raise ValueError(f'Monte Carlo harnesses need a population stepper, got {type(stepper).__name__}.')
    return stepper


def mc_failure_rate(truth: MixtureModel,
                    stepper: Stepper,
                    trials: int,
                    success_margin: float = 0.1,
                    seed: int = 0,
                    tree: Optional[TreeConstructionSpec] = None,
                    stop: StoppingRule = StoppingRule(),
                    threads: Optional[int] = None) -> Tuple[McSummary, List[TrialRecord]]:
    """Estimate how often random initialization reaches the global maximum.

    Each trial draws its own generator from (seed, trial index), samples M
    initial centers from the truth, runs the stepper and counts a success when
    the final likelihood exceeds L(mu*) - success_margin.

    Args:
        truth: The true mixture.
        stepper: Population EM or first-order EM on `truth`.
        trials: Number of trials.
        success_margin: Slack below L(mu*) still counted as success.
        seed: Master seed.
        tree: Tree construction used to classify initializations, if any.
        stop: Stopping rule of every run.
        threads: Worker count; defaults to GMML_THREADS.

    Raises:
        ValueError: if trials < 1 or the stepper is sample based.
    """
    if trials < 1:
        raise ValueError(f'At least one trial is needed, got {trials}.')
    stepper = _population_stepper(stepper)
    truth_likelihood = population_log_likelihood(truth, truth, stepper.quad)

    def trial(index: int) -> TrialRecord:
        init = random_init(truth, trial_rng(seed, index))
        centers = init_centers(init)
        classification = classify_init(centers, tree) if tree is not None else None
        trajectory = run(centers, stepper, stop)
        return TrialRecord(
            index=index,
            seed=(seed, index),
            init=tuple(init),
            event_e=event_e_holds(init, truth),
            classification=classification,
            final_likelihood=trajectory.final_likelihood,
            success=trajectory.final_likelihood > truth_likelihood - success_margin,
            converged=trajectory.converged,
            iterations=trajectory.iterations,
            final=tuple(float(v) for v in np.ravel(trajectory.final)),
        )

    records = parallel_map(trial, trials, threads)
    failed = [r.final_likelihood for r in records if not r.success]
    good = [r for r in records if r.classification is not None and r.classification.good]
    summary = McSummary(
        trials=trials,
        successes=sum(r.success for r in records),
        good_inits=len(good),
        rule_b_goods=sum(r.classification.one_sided for r in good),
        event_e=sum(r.event_e for r in records),
        truth_likelihood=truth_likelihood,
        c_gap=truth_likelihood - max(failed) if failed else None,
        coupling_counterexamples=sum(
            1 for r in records
            if r.success and r.event_e and r.classification is not None and not r.classification.good),
        unconverged=sum(not r.converged for r in records),
    )
    logger.info('%s: %d trials, success rate %.4f, good-init rate %.4f', stepper.name, trials,
                summary.success_rate, summary.good_init_rate)
    return summary, records


@dataclasses.dataclass(frozen=True)
class TrappingResult:
    """Whether the counts in the two inner balls stayed fixed along a run.

    Attributes:
        trapped: n1 and n2 never changed; False when skipped.
        skipped: The run started with an empty inner ball, so nothing is asserted.
        reason: Why the check was skipped.
        initial_counts: (n1, n2, n3) at t = 0.
        final_counts: (n1, n2, n3) at the last recorded iterate.
        inequality_holds: The one-step containment inequalities held at every
            checked iterate; None when they were not evaluated.
        iterations: Iterations run.
    """
    trapped: bool
    skipped: bool = False
    reason: str = ''
    initial_counts: Tuple[int, ...] = ()
    final_counts: Tuple[int, ...] = ()
    inequality_holds: Optional[bool] = None
    iterations: int = 0


def trapping_check(trajectory: EmTrajectory) -> TrappingResult:
    """Compare the counts n1, n2 of the first two regions across the trajectory.

    Raises:
        ValueError: if the trajectory carries no region counts.
    """
    if not trajectory.urn_counts:
        raise ValueError('Trajectory has no region counts; pass regions to run().')
    initial, final = trajectory.urn_counts[0], trajectory.urn_counts[-1]
    if initial[0] < 1 or initial[1] < 1:
        logger.warning('Trapping check skipped: initial counts %s leave an inner ball empty', initial)
        return TrappingResult(False, True, 'an inner ball starts without centers', initial, final,
                              iterations=trajectory.iterations)
    trapped = all(counts[:2] == initial[:2] for counts in trajectory.urn_counts)
    return TrappingResult(trapped, initial_counts=initial, final_counts=final, iterations=trajectory.iterations)


def containment_margins(mu: np.ndarray, spec: DiffuseSpec, truth: MixtureModel,
                        quad: QuadratureSpec = QuadratureSpec()) -> np.ndarray:
    """Signed margins of the one-step containment inequalities at mu.

    For a center in B(c delta, 2 delta) these are E w_i (X - (c-2) delta) and
    (c+2) delta E w_i - E w_i X, mirrored for B(-c delta, 2 delta). All are
    non-negative exactly when the EM update keeps every inner center in its ball.
    """
    terms = population_terms(mu, truth, quad)
    left, right, _ = spec.regions()
    margins = []
    for i, value in enumerate(terms.mu):
        for ball, sign in ((right, 1.0), (left, -1.0)):
            if not ball.contains(value):
                continue
            # E w_i (X - a) = grad_i + (mu_i - a) E w_i keeps the subtraction local
            inner = sign * (spec.c - 2) * spec.delta
            outer = sign * (spec.c + 2) * spec.delta
            margins.append(sign * (terms.gradient[i] + (value - inner) * terms.ew[i]))
            margins.append(-sign * (terms.gradient[i] + (value - outer) * terms.ew[i]))
    return np.asarray(margins)


def run_trapping_instance(spec: DiffuseSpec,
                          init: Sequence[float],
                          stepper_name: str = PopulationEm.name,
                          iters: int = 200,
                          s: float = 0.5,
                          quad: QuadratureSpec = QuadratureSpec(),
                          tol: float = 1e-9) -> TrappingResult:
    """Run a population stepper on a diffuse instance and test that it stays trapped.

    Besides the region counts, the containment inequalities are evaluated at
    every recorded iterate as an independent check.
    """
    truth = make_diffuse(spec)
    stepper = _population_stepper(make_stepper(stepper_name, truth=truth, s=s, quad=quad))
    regions = spec.regions()
    trajectory = run(init, stepper, StoppingRule(max_iters=iters, step_tol=1e-12), regions=regions)
    result = trapping_check(trajectory)
    if result.skipped:
        return result
    holds = all(np.all(containment_margins(mu, spec, truth, quad) >= -tol) for mu in trajectory.iterates)
    return dataclasses.replace(result, inequality_holds=bool(holds))


@dataclasses.dataclass(frozen=True)
class TrappingInstance:
    """A random diffuse instance with an initialization satisfying the trapping hypotheses."""
    spec: DiffuseSpec
    init: Tuple[float, ...]


def random_trapping_instance(rng: np.random.Generator,
                             inner_count: int,
                             far_count: int = 0,
                             c: float = 25.0) -> TrappingInstance:
    """Draw true and initial centers for the trapping experiments.

    delta is log M + 4. Inner true centers fill both balls B(+-c delta, delta);
    far centers sit beyond 20 c delta and each gets an initial center within a
    twentieth of its magnitude. The M inner initial centers put at least one
    center in each ball B(+-c delta, 2 delta).
    """
    if inner_count < 2:
        raise ValueError(f'A diffuse instance needs at least 2 inner centers, got {inner_count}.')
    delta = math.log(inner_count) + 4
    cd = c * delta
    n_left = int(rng.integers(1, inner_count))
    left = tuple(-cd + rng.uniform(-0.9, 0.9, n_left) * delta)
    right = tuple(cd + rng.uniform(-0.9, 0.9, inner_count - n_left) * delta)
    far = tuple(rng.choice([-1.0, 1.0], far_count) * rng.uniform(21.0, 40.0, far_count) * cd)
    spec = DiffuseSpec(c, delta, left, right, far)
    k_left = int(rng.integers(1, inner_count))
    init = list(-cd + rng.uniform(-1.9, 1.9, k_left) * delta)
    init += list(cd + rng.uniform(-1.9, 1.9, inner_count - k_left) * delta)
    init += [v + rng.uniform(-0.05, 0.05) * abs(v) for v in far]
    return TrappingInstance(spec, tuple(float(v) for v in init))


def trapping_sweep(instances: int,
                   seed: int = 0,
                   stepper_name: str = PopulationEm.name,
                   iters: int = 200,
                   s: float = 0.5,
                   quad: QuadratureSpec = QuadratureSpec(),
                   threads: Optional[int] = None) -> List[Tuple[TrappingInstance, TrappingResult]]:
    """Random trapping instances with M in {2, 3, 4}, alternating between M = M~ and M < M~."""

    def trial(index: int) -> Tuple[TrappingInstance, TrappingResult]:
        rng = trial_rng(seed, index)
        inner = 2 + index % 3
        far = 0 if index % 2 == 0 else 1 + int(rng.integers(0, 2))
        instance = random_trapping_instance(rng, inner, far)
        return instance, run_trapping_instance(instance.spec, instance.init, stepper_name, iters, s, quad)

    results = parallel_map(trial, instances, threads)
    trapped = sum(r.trapped for _, r in results)
    logger.info('%s trapping sweep: %d/%d instances trapped', stepper_name, trapped, instances)
    return results


TRAPPING_CSV_HEADER = ('index', 'inner', 'far', 'n1', 'n2', 'n3', 'trapped', 'skipped', 'inequality_holds')


def trapping_to_csv(results: Sequence[Tuple[TrappingInstance, TrappingResult]], stream: IO[str]) -> None:
    """One row per instance with its initial region counts and outcome flags."""
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(TRAPPING_CSV_HEADER)
    for index, (instance, result) in enumerate(results):
        writer.writerow([index, instance.spec.inner_count, len(instance.spec.far), *result.initial_counts,
                         int(result.trapped), int(result.skipped), int(bool(result.inequality_holds))])


@dataclasses.dataclass(frozen=True)
class SaddleSummary:
    """Limit points of first-order EM from random initializations.

    Attributes:
        trials: Number of runs.
        converged: Runs reaching the gradient tolerance.
        strict_saddles: Limits classified as strict saddles.
        kinds: Count of each classification.
        min_jacobian_eigenvalue: Smallest eigenvalue of I + sH over every recorded iterate.
        max_final_grad_norm: Largest final gradient norm.
    """
    trials: int
    converged: int
    strict_saddles: int
    kinds: Dict[str, int]
    min_jacobian_eigenvalue: float
    max_final_grad_norm: float

    def to_json_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def saddle_avoidance_trial(truth: MixtureModel,
                           trials: int,
                           s: float = 0.5,
                           seed: int = 0,
                           stop: StoppingRule = StoppingRule(max_iters=200_000, grad_tol=1e-7),
                           quad: QuadratureSpec = QuadratureSpec(),
                           threads: Optional[int] = None) -> SaddleSummary:
    """Run first-order EM from random initializations and classify every limit.

    The Jacobian I + sH is evaluated at every recorded iterate of each run.
    """
    if trials < 1:
        raise ValueError(f'At least one trial is needed, got {trials}.')
    stepper = FirstOrderEm(truth, s, quad)
    report_tol = stop.grad_tol if stop.grad_tol is not None else 1e-7

    def trial(index: int) -> Tuple[str, bool, float, float]:
        init = init_centers(random_init(truth, trial_rng(seed, index)))
        trajectory = run(init, stepper, stop)
        report = classify_critical_point(trajectory.final, truth, quad, grad_tol=report_tol)
        jacobian = min(jacobian_min_eigenvalue(mu, truth, s, quad) for mu in trajectory.iterates)
        return report.kind, report.grad_norm <= report_tol, jacobian, trajectory.final_grad_norm

    outcomes = parallel_map(trial, trials, threads)
    kinds: Dict[str, int] = {}
    for kind, *_ in outcomes:
        kinds[kind] = kinds.get(kind, 0) + 1
    summary = SaddleSummary(
        trials=trials,
        converged=sum(o[1] for o in outcomes),
        strict_saddles=kinds.get(STRICT_SADDLE, 0),
        kinds=dict(sorted(kinds.items())),
        min_jacobian_eigenvalue=min(o[2] for o in outcomes),
        max_final_grad_norm=max(o[3] for o in outcomes),
    )
    logger.info('Saddle trials: %d/%d converged, %d strict saddles', summary.converged, trials,
                summary.strict_saddles)
    return summary
