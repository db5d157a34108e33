"""Command-line front end: `gmml <command> [options]`.

Every command resolves an ExperimentConfig from defaults, an optional JSON file
and explicit flags, writes its artifacts into --out together with config.json,
and returns one of the EXIT_* codes.
"""
import argparse
import dataclasses
import io
import json
import logging
import math
import sys
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from gmml.config import ExperimentConfig, load_config_file, resolve_config
from gmml.constructions import (
    DiffuseSpec,
    ThreeComponentSpec,
    TreeConstructionSpec,
    extended_m_construction,
    make_diffuse,
    pruned_tree,
    region_d_contains,
    three_component,
    tree_construction,
)
from gmml.em import (
    SampleEm,
    StoppingRule,
    classify_critical_point,
    make_stepper,
    run,
    trajectory_to_csv,
)
from gmml.experiments import (
    mc_failure_rate,
    saddle_avoidance_trial,
    trapping_sweep,
    trapping_to_csv,
    trial_rng,
    trials_to_csv,
)
from gmml.initialization import (
    classify_init,
    enumerate_good_init_probability,
    event_e_probability,
    exact_good_init_probability,
    good_init_recursion_bound,
    init_centers,
    random_init,
)
from gmml.landscape import SurfaceGrid, boundary_values, find_critical_points, surface_grid, surface_to_csv
from gmml.lemmas import (
    HypothesisViolation,
    check_lemma_center_negative,
    check_lemma_center_positive,
    check_lemma_general_calc,
    check_lemma_wdifference,
    lemma_suite,
    lemmas_to_csv,
)
from gmml.mixture import MixtureModel, sample_points
from gmml.population import population_batch, population_terms
from gmml.quadrature import cross_validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_CONVERGED = 2
EXIT_HYPOTHESIS = 3
EXIT_CHECK_FAILED = 4

SURFACE_CHECK_CELLS = 64

ENUMERATION_LIMIT = 8


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""


class _Parser(argparse.ArgumentParser):

    def error(self, message: str):
        raise UsageError(message)


def float_list(text: str) -> List[float]:
    """Parse '1,2.5,-3' into floats; an empty string gives an empty list."""
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'Expected a comma-separated list of numbers, got {text!r}.')


def init_value(text: str) -> Any:
    """'random', 'interior', 'truth' or a comma-separated list of centers."""
    if text in ('random', 'interior', 'truth'):
        return text
    return float_list(text)


def flag(text: str) -> bool:
    lowered = text.lower()
    if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
        raise argparse.ArgumentTypeError(f'Expected a boolean, got {text!r}.')
    return lowered in ('true', '1', 'yes')


MODEL_DEFAULTS: Dict[str, Any] = {
    'model': None,
    'truth': None,
    'kind': 'three',
    'R': None,
    'gamma': 20.0,
    'count': None,
    'levels': 3,
    'ratio': 0.01,
    'faithful': False,
    'c': 25.0,
    'delta': None,
    'n_left': 1,
    'n_right': 1,
    'far': [],
}


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group('true model')
    group.add_argument('--model', help='model.json written by `gmml construct`')
    group.add_argument('--truth', type=float_list, help='true centers on the line, comma separated')
    group.add_argument('--kind', choices=['three', 'extended', 'tree', 'pruned', 'diffuse'])
    group.add_argument('--R', type=float)
    group.add_argument('--gamma', type=float)
    group.add_argument('--count', type=int)
    group.add_argument('--levels', type=int)
    group.add_argument('--ratio', type=float)
    group.add_argument('--faithful', type=flag)
    group.add_argument('--c', type=float)
    group.add_argument('--delta', type=float)
    group.add_argument('--n-left', dest='n_left', type=int)
    group.add_argument('--n-right', dest='n_right', type=int)
    group.add_argument('--far', type=float_list)


def tree_spec(params: Mapping[str, Any]) -> TreeConstructionSpec:
    """Tree spec from parameters; without R the smallest faithful scale is used."""
    if params.get('R') is None:
        return TreeConstructionSpec.faithful_scale(params['levels'], params.get('count'))
    return TreeConstructionSpec(params['levels'], params['R'], params['ratio'], params.get('count'),
                                bool(params['faithful']))


def build_model(params: Mapping[str, Any]) -> Tuple[MixtureModel, Optional[TreeConstructionSpec]]:
    """The true model named by the parameters, and its tree spec when it is a tree.

    Raises:
        ValueError: for an unknown kind or invalid construction parameters.
    """
    if params.get('model'):
        with open(params['model'], encoding='UTF-8') as f:
            return MixtureModel.from_json(f.read()), None
    if params.get('truth'):
        return MixtureModel.from_centers(params['truth']), None
    kind = params['kind']
    R = params.get('R')
    if kind == 'three':
        return three_component(ThreeComponentSpec(5.0 if R is None else R, params['gamma'])), None
    if kind == 'extended':
        count = params.get('count') or 3
        return extended_m_construction(count, 5.0 if R is None else R, params['gamma']), None
    if kind == 'tree':
        spec = tree_spec({**params, 'count': None})
        return tree_construction(spec), spec
    if kind == 'pruned':
        spec = tree_spec(params)
        return pruned_tree(spec), spec
    if kind == 'diffuse':
        inner = params['n_left'] + params['n_right']
        delta = params.get('delta') or math.log(inner) + 4
        spec = DiffuseSpec.spread(params['c'], delta, params['n_left'], params['n_right'], params['far'],
                                  for_trapping=False)
        return make_diffuse(spec), None
    raise ValueError(f'Unknown construction kind {kind!r}.')


def _write(config: ExperimentConfig, name: str, text: str) -> None:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    (config.out_dir / name).write_text(text, encoding='UTF-8')
    logger.info('Wrote %s', config.out_dir / name)


def _write_json(config: ExperimentConfig, name: str, payload: Any) -> None:
    _write(config, name, json.dumps(payload, indent=2, sort_keys=True) + '\n')


def _check_quadrature(config: ExperimentConfig, truth: MixtureModel, points: Sequence[Any] = ()) -> None:
    """Re-evaluate L and ||grad L|| at the truth and at `points` under a second rule.

    Raises:
        ArithmeticError: if any value moves by more than the cross-validation tolerance.
    """
    if not config.quad_validate or truth.dim != 1:
        return
    groups: Dict[int, List[np.ndarray]] = {truth.count: [truth.line]}
    for point in points:
        line = np.ravel(np.asarray(point, dtype=float))
        groups.setdefault(line.size, []).append(line)
    for mus in groups.values():
        cross_validate(lambda q, mus=mus: np.concatenate(population_batch(np.array(mus), truth, q)),
                       config.quadrature)
    logger.info('Quadrature cross-check passed on %d configurations', sum(len(g) for g in groups.values()))


def _surface_sample(surface: SurfaceGrid, cells: int = SURFACE_CHECK_CELLS) -> List[Tuple[float, float]]:
    size = surface.axis.size
    flat = np.unique(np.linspace(0, size * size - 1, min(cells, size * size)).astype(int))
    return [(float(surface.axis[k // size]), float(surface.axis[k % size])) for k in flat]


def cmd_surface(config: ExperimentConfig) -> int:
    p = config.params
    truth = MixtureModel.from_centers(p['truth'])
    if truth.count != 2:
        raise ValueError(f'The surface map needs a 2-component truth, got {truth.count} components.')
    surface = surface_grid(truth, (p['lo'], p['hi']), p['step'], config.quadrature)
    critical = find_critical_points(truth, surface, config.quadrature, grad_tol=p['grad_tol'])
    _check_quadrature(config, truth, _surface_sample(surface) + [r.point for r in critical])
    stream = io.StringIO()
    surface_to_csv(surface, critical, stream)
    _write(config, 'surface.csv', stream.getvalue())
    _write_json(config, 'critical_points.json', [r.to_json_dict() for r in critical])
    return EXIT_OK


def cmd_construct(config: ExperimentConfig) -> int:
    model, _ = build_model(config.params)
    _write(config, 'model.json', model.to_json() + '\n')
    return EXIT_OK


def cmd_boundary_values(config: ExperimentConfig) -> int:
    p = config.params
    spec = ThreeComponentSpec(p['R'], p['gamma'])
    values = boundary_values(spec, config.quadrature, p['resolution'], p['starts'])
    _check_quadrature(config, three_component(spec), values.argmaxes)
    _write_json(config, 'boundary_values.json', values.to_json_dict())
    return EXIT_OK if all(values.converged) else EXIT_NOT_CONVERGED


def _initial_centers(p: Mapping[str, Any], truth: MixtureModel, seed: int) -> np.ndarray:
    init = p['init']
    if init is None:
        init = 'interior' if p['kind'] == 'three' and not p.get('truth') and not p.get('model') else 'random'
    if init == 'truth':
        return truth.centers.copy()
    if init == 'random':
        return init_centers(random_init(truth, trial_rng(seed, 0)))
    if init == 'interior':
        gamma_r = float(truth.line[-1])
        return np.array([[0.0], [gamma_r], [gamma_r]])
    return MixtureModel.from_centers(init).centers.copy()


def cmd_run(config: ExperimentConfig) -> int:
    p = config.params
    truth, _ = build_model(p)
    mu0 = _initial_centers(p, truth, config.seed)
    data = None
    if p['stepper'] == SampleEm.name:
        data, _ = sample_points(truth, p['samples'], trial_rng(config.seed, 1))
    stepper = make_stepper(p['stepper'], truth=truth, data=data, s=p['s'], quad=config.quadrature)
    stop = StoppingRule(p['max_iters'], p['step_tol'], p['grad_tol'])
    trajectory = run(mu0 if p['stepper'] == SampleEm.name else mu0[:, 0], stepper, stop)
    _check_quadrature(config, truth, [trajectory.final])
    stream = io.StringIO()
    trajectory_to_csv(trajectory, stream)
    _write(config, 'trajectory.csv', stream.getvalue())
    report: Dict[str, Any] = {
        'stepper': stepper.name,
        'iterations': trajectory.iterations,
        'converged': trajectory.converged,
        'exit_reason': trajectory.exit_reason,
        'final': np.ravel(trajectory.final).tolist(),
        'final_loglik': trajectory.final_likelihood,
        'final_grad_norm': trajectory.final_grad_norm,
    }
    if p['stepper'] != SampleEm.name:
        report['critical_point'] = classify_critical_point(trajectory.final, truth, config.quadrature).to_json_dict()
        report['truth_loglik'] = population_terms(truth, truth, config.quadrature).log_likelihood
        if p['kind'] == 'three' and truth.count == 3 and not p.get('truth') and not p.get('model'):
            spec = ThreeComponentSpec(5.0 if p.get('R') is None else p['R'], p['gamma'])
            report['in_region_d'] = region_d_contains(trajectory.final, spec)
    _write_json(config, 'report.json', report)
    return EXIT_OK if trajectory.converged else EXIT_NOT_CONVERGED


def cmd_mc_failure(config: ExperimentConfig) -> int:
    p = config.params
    truth, tree = build_model(p)
    stepper = make_stepper(p['stepper'], truth=truth, s=p['s'], quad=config.quadrature)
    stop = StoppingRule(max_iters=p['max_iters'], grad_tol=p['grad_tol'])
    summary, records = mc_failure_rate(truth, stepper, p['trials'], p['margin'], config.seed, tree, stop,
                                       config.threads)
    _check_quadrature(config, truth, [r.final for r in records])
    stream = io.StringIO()
    trials_to_csv(records, stream)
    _write(config, 'trials.csv', stream.getvalue())
    payload = summary.to_json_dict()
    if tree is not None and tree.count == 2 ** tree.levels:
        payload['exact_good_init_probability'] = float(exact_good_init_probability(tree.count))
    _write_json(config, 'summary.json', payload)
    return EXIT_OK


def _fraction_json(value) -> Dict[str, Any]:
    return {'exact': str(value), 'value': float(value)}


def cmd_classify_init(config: ExperimentConfig) -> int:
    p = config.params
    spec = tree_spec({**MODEL_DEFAULTS, **p})
    count = spec.count
    report: Dict[str, Any] = {
        'count': count,
        'levels': spec.levels,
        'event_e_probability': event_e_probability(count),
    }
    if count & (count - 1) == 0:
        report['exact_probability'] = _fraction_json(exact_good_init_probability(count))
        report['recursion_bound'] = _fraction_json(good_init_recursion_bound(count))
    if count <= ENUMERATION_LIMIT:
        report['enumerated_probability'] = _fraction_json(enumerate_good_init_probability(count, spec.levels))
    if p['init']:
        verdict = classify_init(p['init'], spec)
        report['classification'] = {
            'good': verdict.good,
            'reason': verdict.reason,
            'levels': [list(map(list, level)) for level in verdict.levels],
            'one_sided': verdict.one_sided,
            'detail': verdict.detail,
        }
    if p['trials']:
        truth = pruned_tree(spec)
        goods = sum(classify_init(init_centers(random_init(truth, trial_rng(config.seed, i))), spec).good
                    for i in range(p['trials']))
        report['sampled_good_init_rate'] = goods / p['trials']
    _write_json(config, 'report.json', report)
    return EXIT_OK


LEMMA_INPUTS = {
    'general_calc': ('truth', 'candidates', 'a'),
    'center_positive': ('a', 'mu_star', 'candidates'),
    'center_negative': ('r', 'candidates'),
    'wdifference': ('candidates',),
}


def _single_lemma(p: Mapping[str, Any], config: ExperimentConfig):
    check = p['check']
    missing = [name for name in LEMMA_INPUTS.get(check, ()) if p.get(name) is None]
    if missing:
        raise ValueError(f'{check} needs {", ".join("--" + m.replace("_", "-") for m in missing)}.')
    if check == 'general_calc':
        return check_lemma_general_calc(p['truth'], p['candidates'], p['index'], p['a'], p['match_divisor'],
                                        config.quadrature)
    if check == 'center_positive':
        return check_lemma_center_positive(p['a'], p['mu_star'], p['candidates'], p['index'], p['strong'],
                                           config.quadrature)
    if check == 'center_negative':
        return check_lemma_center_negative(p['r'], p['candidates'], p['index'], config.quadrature)
    if check == 'wdifference':
        return check_lemma_wdifference(p['candidates'], p['index'])
    raise ValueError(f'Unknown lemma check {check!r}.')


def cmd_lemma_suite(config: ExperimentConfig) -> int:
    p = config.params
    if p['check']:
        reports = [_single_lemma(p, config)]
    else:
        reports = lemma_suite(config.seed, p['per_lemma'], config.quadrature)
    stream = io.StringIO()
    lemmas_to_csv(reports, stream)
    _write(config, 'lemmas.csv', stream.getvalue())
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


def cmd_saddle_trials(config: ExperimentConfig) -> int:
    p = config.params
    truth, _ = build_model(p)
    _check_quadrature(config, truth)
    stop = StoppingRule(max_iters=p['max_iters'], grad_tol=p['grad_tol'])
    summary = saddle_avoidance_trial(truth, p['trials'], p['s'], config.seed, stop, config.quadrature,
                                     config.threads)
    _write_json(config, 'saddle.json', summary.to_json_dict())
    return EXIT_OK if summary.converged == summary.trials else EXIT_NOT_CONVERGED


def cmd_trapping(config: ExperimentConfig) -> int:
    p = config.params
    results = trapping_sweep(p['instances'], config.seed, p['stepper'], p['iters'], p['s'], config.quadrature,
                             config.threads)
    stream = io.StringIO()
    trapping_to_csv(results, stream)
    _write(config, 'trapping.csv', stream.getvalue())
    ok = all(r.trapped and r.inequality_holds for _, r in results if not r.skipped)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


@dataclasses.dataclass(frozen=True)
class Command:
    handler: Callable[[ExperimentConfig], int]
    defaults: Dict[str, Any]
    add_arguments: Callable[[argparse.ArgumentParser], None]
    help: str


def _surface_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--truth', type=float_list)
    parser.add_argument('--lo', type=float)
    parser.add_argument('--hi', type=float)
    parser.add_argument('--step', type=float)
    parser.add_argument('--grad-tol', dest='grad_tol', type=float)


def _boundary_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--R', type=float)
    parser.add_argument('--gamma', type=float)
    parser.add_argument('--resolution', type=int)
    parser.add_argument('--starts', type=int)


def _stepper_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--stepper', choices=['em-sample', 'em-population', 'first-order-em'])
    parser.add_argument('--s', type=float)


def _run_arguments(parser: argparse.ArgumentParser) -> None:
    _add_model_arguments(parser)
    _stepper_arguments(parser)
    parser.add_argument('--init', type=init_value)
    parser.add_argument('--max-iters', dest='max_iters', type=int)
    parser.add_argument('--step-tol', dest='step_tol', type=float)
    parser.add_argument('--grad-tol', dest='grad_tol', type=float)
    parser.add_argument('--samples', type=int)


def _mc_arguments(parser: argparse.ArgumentParser) -> None:
    _add_model_arguments(parser)
    _stepper_arguments(parser)
    parser.add_argument('--trials', type=int)
    parser.add_argument('--margin', type=float)
    parser.add_argument('--max-iters', dest='max_iters', type=int)
    parser.add_argument('--grad-tol', dest='grad_tol', type=float)


def _classify_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--levels', type=int)
    parser.add_argument('--count', type=int)
    parser.add_argument('--R', type=float)
    parser.add_argument('--init', type=float_list)
    parser.add_argument('--trials', type=int)


def _lemma_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--per-lemma', dest='per_lemma', type=int)
    parser.add_argument('--check', choices=['general_calc', 'center_positive', 'center_negative', 'wdifference'])
    parser.add_argument('--truth', type=float_list)
    parser.add_argument('--candidates', type=float_list)
    parser.add_argument('--index', type=int)
    parser.add_argument('--a', type=float)
    parser.add_argument('--r', type=float)
    parser.add_argument('--mu-star', dest='mu_star', type=float)
    parser.add_argument('--strong', type=flag)
    parser.add_argument('--match-divisor', dest='match_divisor', type=float)


def _saddle_arguments(parser: argparse.ArgumentParser) -> None:
    _add_model_arguments(parser)
    parser.add_argument('--s', type=float)
    parser.add_argument('--trials', type=int)
    parser.add_argument('--max-iters', dest='max_iters', type=int)
    parser.add_argument('--grad-tol', dest='grad_tol', type=float)


def _trapping_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--instances', type=int)
    parser.add_argument('--stepper', choices=['em-population', 'first-order-em'])
    parser.add_argument('--s', type=float)
    parser.add_argument('--iters', type=int)


COMMANDS: Dict[str, Command] = {
    'surface': Command(cmd_surface, {'truth': [-4.0, 4.0], 'lo': -10.0, 'hi': 10.0, 'step': 0.1, 'grad_tol': 1e-7},
                       _surface_arguments, 'likelihood map of two candidate centers'),
    'construct': Command(cmd_construct, dict(MODEL_DEFAULTS), _add_model_arguments, 'write a true model as JSON'),
    'boundary-values': Command(cmd_boundary_values, {'R': 5.0, 'gamma': 20.0, 'resolution': 50, 'starts': 5},
                               _boundary_arguments, 'v0 and the face suprema of region D'),
    'run': Command(cmd_run, {**MODEL_DEFAULTS, 'stepper': 'first-order-em', 's': 0.5, 'init': None,
                             'max_iters': 10_000, 'step_tol': 1e-10, 'grad_tol': None, 'samples': 1000},
                   _run_arguments, 'iterate one stepper and classify its limit'),
    'mc-failure': Command(cmd_mc_failure, {**MODEL_DEFAULTS, 'kind': 'tree', 'stepper': 'em-population', 's': 0.5,
                                           'trials': 500, 'margin': 0.1, 'max_iters': 10_000, 'grad_tol': None},
                          _mc_arguments, 'failure rate of random initialization'),
    'classify-init': Command(cmd_classify_init, {'levels': 3, 'count': None, 'R': None, 'init': None, 'trials': 0},
                             _classify_arguments, 'good-initialization rules and probabilities'),
    'lemma-suite': Command(cmd_lemma_suite, {'per_lemma': 200, 'check': None, 'truth': None, 'candidates': None,
                                             'index': 0, 'a': None, 'r': None, 'mu_star': None, 'strong': False,
                                             'match_divisor': 6.0},
                           _lemma_arguments, 'numerical checks of the trapping inequalities'),
    'saddle-trials': Command(cmd_saddle_trials, {**MODEL_DEFAULTS, 'truth': [-4.0, 4.0], 's': 0.5, 'trials': 200,
                                                 'max_iters': 200_000, 'grad_tol': 1e-7},
                             _saddle_arguments, 'limits of first-order EM from random starts'),
    'trapping': Command(cmd_trapping, {'instances': 50, 'stepper': 'em-population', 's': 0.5, 'iters': 200},
                        _trapping_arguments, 'trapping of centers in diffuse instances'),
}


def _global_arguments() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument('--seed', type=int, help='master seed')
    common.add_argument('--quad-order', dest='quad_order', type=int, help='Gauss-Hermite nodes per component')
    common.add_argument('--quad-validate', dest='quad_validate', action='store_true',
                        help='cross-check quadrature at doubled order')
    common.add_argument('--threads', type=int, help='worker threads (default: $GMML_THREADS or 1)')
    common.add_argument('--out', help='output directory')
    common.add_argument('--config', help='JSON config file; flags override it')
    common.add_argument('--log-level', dest='log_level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_arguments()
    parser = _Parser(prog='gmml', description='Likelihood landscapes of Gaussian mixtures.', parents=[common],
                     argument_default=argparse.SUPPRESS)
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, command in COMMANDS.items():
        sub = subparsers.add_parser(name, help=command.help, parents=[common], argument_default=argparse.SUPPRESS)
        command.add_arguments(sub)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        flags = vars(parser.parse_args(argv))
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f'gmml: error: {e}', file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=flags.pop('log_level', 'WARNING'),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    command = flags.pop('command')
    config_path = flags.pop('config', None)
    try:
        payload = load_config_file(config_path) if config_path else None
        config = resolve_config(command, COMMANDS[command].defaults, payload, flags)
        config.write()
        return COMMANDS[command].handler(config)
    except HypothesisViolation as e:
        logger.error('%s', e)
        print(f'gmml: hypothesis violation: {e}', file=sys.stderr)
        return EXIT_HYPOTHESIS
    except ValueError as e:
        print(f'gmml: error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as e:
        print(f'gmml: numerical check failed: {e}', file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == '__main__':
    sys.exit(main())
