import json

import numpy as np
import pytest

from gmml import cli


@pytest.fixture
def out(tmp_path):
    return tmp_path / 'out'


def read_json(path):
    return json.loads(path.read_text(encoding='UTF-8'))


def test_construct_three(out):
    assert cli.main(['construct', '--kind', 'three', '--R', '1', '--gamma', '10', '--out', str(out)]) == cli.EXIT_OK
    assert read_json(out / 'model.json')['centers'] == [[-1.0], [1.0], [10.0]]
    config = read_json(out / 'config.json')
    assert config['command'] == 'construct'
    assert config['params']['gamma'] == 10.0


def test_construct_pruned_tree(out):
    argv = ['construct', '--kind', 'pruned', '--levels', '2', '--count', '3', '--R', '1', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    centers = [c[0] for c in read_json(out / 'model.json')['centers']]
    assert centers == pytest.approx([-1.01, -0.99, 0.99])


def test_flags_override_config_file(tmp_path, out):
    config_file = tmp_path / 'config.json'
    config_file.write_text(json.dumps({
        'command': 'construct',
        'seed': 5,
        'params': {'kind': 'three', 'R': 1.0, 'gamma': 10.0},
    }), encoding='UTF-8')
    argv = ['construct', '--config', str(config_file), '--gamma', '30', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    assert read_json(out / 'model.json')['centers'] == [[-1.0], [1.0], [30.0]]
    assert read_json(out / 'config.json')['seed'] == 5


def test_config_file_for_another_command(tmp_path, out):
    config_file = tmp_path / 'config.json'
    config_file.write_text(json.dumps({'command': 'run'}), encoding='UTF-8')
    assert cli.main(['construct', '--config', str(config_file), '--out', str(out)]) == cli.EXIT_USAGE


@pytest.mark.parametrize('argv', [
    ['explode'],
    [],
    ['construct', '--R', 'wide'],
    ['construct', '--kind', 'three', '--R', '-1'],
    ['run', '--stepper', 'newton'],
])
def test_usage_errors(argv, out):
    assert cli.main(argv + ['--out', str(out)]) == cli.EXIT_USAGE


def test_run_from_truth_converges(out):
    argv = ['run', '--kind', 'three', '--R', '5', '--gamma', '20', '--init', 'truth', '--stepper', 'em-population',
            '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    report = read_json(out / 'report.json')
    assert report['exit_reason'] == 'step'
    assert report['critical_point']['kind'] == 'local-maximum'
    assert (out / 'trajectory.csv').read_text(encoding='UTF-8').startswith('t,mu_1,mu_2,mu_3,loglik')


def test_run_out_of_budget(out):
    argv = ['run', '--kind', 'three', '--init', 'interior', '--max-iters', '1', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_NOT_CONVERGED
    report = read_json(out / 'report.json')
    assert report['iterations'] == 1
    assert report['in_region_d']


def test_run_with_quadrature_validation(out):
    argv = ['run', '--truth=-4,4', '--init=-3,3.5', '--grad-tol', '1e-7', '--quad-validate', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    assert read_json(out / 'config.json')['quad_validate'] is True


def test_run_sample_em(out):
    argv = ['run', '--truth=-4,4', '--init=-1,1', '--stepper', 'em-sample', '--samples', '200', '--max-iters', '500',
            '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    assert 'critical_point' not in read_json(out / 'report.json')


def test_lemma_hypothesis_violation(out):
    argv = ['lemma-suite', '--check', 'general_calc', '--truth=6,-60', '--candidates=3,-58', '--a', '2',
            '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_HYPOTHESIS


def test_single_lemma_check(out):
    argv = ['lemma-suite', '--check', 'center_negative', '--r', '12', '--candidates=0,-12', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    lines = (out / 'lemmas.csv').read_text(encoding='UTF-8').splitlines()
    assert len(lines) == 2
    assert lines[1].startswith('center_negative,')


def test_single_lemma_check_missing_input(out):
    assert cli.main(['lemma-suite', '--check', 'center_negative', '--out', str(out)]) == cli.EXIT_USAGE


def test_lemma_suite(out):
    assert cli.main(['lemma-suite', '--per-lemma', '2', '--out', str(out)]) == cli.EXIT_OK
    assert len((out / 'lemmas.csv').read_text(encoding='UTF-8').splitlines()) == 11


def test_classify_init(out):
    argv = ['classify-init', '--levels', '2', '--R', '1', '--init=-1.01,-1.01,0.99,1.01', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    report = read_json(out / 'report.json')
    assert report['classification']['good']
    assert report['classification']['levels'] == [[[2, 2]], [[2, 0], [1, 1]]]
    assert report['exact_probability']['exact'] == '1/2'
    assert report['enumerated_probability']['exact'] == '1/2'


def test_classify_init_sampling(out):
    assert cli.main(['classify-init', '--levels', '2', '--trials', '50', '--out', str(out)]) == cli.EXIT_OK
    assert 0.0 <= read_json(out / 'report.json')['sampled_good_init_rate'] <= 1.0


def test_mc_failure_is_reproducible(tmp_path):
    base = ['mc-failure', '--truth=-10,10', '--trials', '4', '--max-iters', '100', '--seed', '3']
    assert cli.main(base + ['--threads', '1', '--out', str(tmp_path / 'a')]) == cli.EXIT_OK
    assert cli.main(base + ['--threads', '2', '--out', str(tmp_path / 'b')]) == cli.EXIT_OK
    first = (tmp_path / 'a' / 'trials.csv').read_text(encoding='UTF-8')
    second = (tmp_path / 'b' / 'trials.csv').read_text(encoding='UTF-8')
    assert first == second
    assert read_json(tmp_path / 'a' / 'summary.json')['trials'] == 4


def test_surface(out):
    argv = ['surface', '--truth=-4,4', '--lo', '-2', '--hi', '2', '--step', '0.5', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    text = (out / 'surface.csv').read_text(encoding='UTF-8')
    assert len(text.splitlines()) >= 1 + 81
    assert 'strict-saddle' in text
    assert read_json(out / 'critical_points.json')


def test_surface_needs_two_components(out):
    assert cli.main(['surface', '--truth=-4,0,4', '--out', str(out)]) == cli.EXIT_USAGE


def test_trapping(out):
    assert cli.main(['trapping', '--instances', '3', '--iters', '50', '--out', str(out)]) == cli.EXIT_OK
    assert len((out / 'trapping.csv').read_text(encoding='UTF-8').splitlines()) == 4


def test_boundary_values(out):
    argv = ['boundary-values', '--R', '5', '--gamma', '20', '--resolution', '50', '--starts', '2', '--out', str(out)]
    code = cli.main(argv)
    values = read_json(out / 'boundary_values.json')
    assert code == (cli.EXIT_OK if all(values['converged']) else cli.EXIT_NOT_CONVERGED)
    assert values['margin'] > 0
    assert values['v0'] > max(values['v1'], values['v2'], values['v3'])


def test_saddle_trials(out):
    assert cli.main(['saddle-trials', '--trials', '3', '--seed', '2', '--out', str(out)]) == cli.EXIT_OK
    summary = read_json(out / 'saddle.json')
    assert summary['trials'] == 3
    assert summary['strict_saddles'] == 0


VALIDATED_COMMANDS = [
    ['run', '--truth=-4,4', '--init=-3,3.5', '--grad-tol', '1e-7'],
    ['surface', '--truth=-4,4', '--lo', '-2', '--hi', '2', '--step', '0.5'],
    ['boundary-values', '--R', '5', '--gamma', '20', '--starts', '1'],
    ['mc-failure', '--truth=-10,10', '--trials', '2', '--max-iters', '50'],
]


@pytest.fixture
def evaluated(monkeypatch):
    """Configurations handed to the quadrature cross-check, keyed by node count."""
    seen = {}
    batch = cli.population_batch

    def recording_batch(mus, truth, quad):
        seen.setdefault(quad.order, []).extend(np.atleast_2d(mus).tolist())
        return batch(mus, truth, quad)

    monkeypatch.setattr(cli, 'population_batch', recording_batch)
    return seen


def test_validation_rechecks_the_final_iterate(out, evaluated):
    argv = ['run', '--truth=-4,4', '--init=-3,3.5', '--grad-tol', '1e-7', '--quad-validate', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    final = read_json(out / 'report.json')['final']
    assert set(evaluated) == {200, 400}
    assert any(np.allclose(mu, final) for mu in evaluated[400])
    assert [-4.0, 4.0] in evaluated[400]


def test_validation_rechecks_boundary_maximizers(out, evaluated):
    argv = ['boundary-values', '--R', '5', '--gamma', '20', '--starts', '1', '--quad-validate', '--out', str(out)]
    cli.main(argv)
    for point in read_json(out / 'boundary_values.json')['argmaxes']:
        assert any(np.allclose(mu, point) for mu in evaluated[400])


def test_validation_rechecks_surface_cells(out, evaluated):
    argv = ['surface', '--truth=-4,4', '--lo', '-2', '--hi', '2', '--step', '0.5', '--quad-validate', '--out', str(out)]
    assert cli.main(argv) == cli.EXIT_OK
    assert len(evaluated[400]) > cli.SURFACE_CHECK_CELLS // 2
    assert [-2.0, -2.0] in evaluated[400]


@pytest.mark.parametrize('argv', VALIDATED_COMMANDS)
def test_quadrature_disagreement_fails_the_check(argv, out, monkeypatch):
    batch = cli.population_batch

    def drifting_batch(mus, truth, quad):
        loglik, grad_norm = batch(mus, truth, quad)
        return loglik + 1e-6 * (quad.order > 200), grad_norm

    monkeypatch.setattr(cli, 'population_batch', drifting_batch)
    assert cli.main(argv + ['--quad-validate', '--out', str(out)]) == cli.EXIT_CHECK_FAILED


@pytest.mark.parametrize('argv', VALIDATED_COMMANDS)
def test_unvalidated_commands_skip_the_check(argv, out, evaluated):
    cli.main(argv + ['--out', str(out)])
    assert not evaluated
