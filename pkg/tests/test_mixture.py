import math

import numpy as np
import pytest

import gmml

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@pytest.fixture
def two_centers():
    return gmml.MixtureModel.from_centers([-1.0, 1.0])


def test_log_gaussian_pdf_at_mean():
    assert gmml.log_gaussian_pdf([0.0], [0.0]) == pytest.approx(-LOG_SQRT_2PI, abs=1e-15)
    assert gmml.log_gaussian_pdf([1.0, 2.0], [1.0, 0.0]) == pytest.approx(-2 * LOG_SQRT_2PI - 2.0)


def test_log_gaussian_pdf_dimension_mismatch():
    with pytest.raises(ValueError, match='Dimension mismatch'):
        gmml.log_gaussian_pdf([0.0, 1.0], [0.0])


def test_single_component_density_is_gaussian():
    model = gmml.MixtureModel.from_centers([2.5])
    assert gmml.log_mixture_density(1.0, model) == pytest.approx(gmml.log_gaussian_pdf([1.0], [2.5]), abs=1e-14)


def test_density_stays_finite_far_from_centers(two_centers):
    value = gmml.log_mixture_density(1e4, two_centers)
    assert np.isfinite(value)
    assert value == pytest.approx(-0.5 * (1e4 - 1) ** 2 - math.log(2) - LOG_SQRT_2PI, rel=1e-12)


def test_responsibilities_midpoint(two_centers):
    weights = gmml.responsibilities(0.0, two_centers.centers)
    assert weights.weights == pytest.approx((0.5, 0.5), abs=1e-15)


def test_responsibilities_far_point_has_no_nan():
    weights = gmml.responsibilities(1e4, [0.0, 1.0])
    assert weights.weights == (0.0, 1.0)


def test_responsibility_matrix_rows_sum_to_one():
    rng = np.random.default_rng(3)
    matrix = gmml.responsibility_matrix(rng.normal(size=(50, 2)) * 10, rng.normal(size=(4, 2)))
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((matrix >= 0) & (matrix <= 1))


def test_responsibilities_without_centers():
    with pytest.raises(ValueError):
        gmml.responsibilities(0.0, [])


@pytest.mark.parametrize('centers', [[], [[1.0], [np.nan]], [[np.inf]]])
def test_invalid_centers(centers):
    with pytest.raises(ValueError):
        gmml.MixtureModel.from_centers(centers)


def test_sample_is_deterministic(two_centers):
    first = gmml.sample(two_centers, 20, np.random.default_rng(7))
    second = gmml.sample(two_centers, 20, np.random.default_rng(7))
    assert first == second
    assert all(s.component in (0, 1) for s in first)


def test_sample_labels_follow_centers():
    model = gmml.MixtureModel.from_centers([-100.0, 100.0])
    points, labels = gmml.sample_points(model, 200, np.random.default_rng(0))
    assert np.all(np.sign(points[:, 0]) == np.where(labels == 0, -1, 1))


def test_min_separation():
    assert gmml.min_separation(gmml.MixtureModel.from_centers([-1.0, 1.0, 5.0])) == pytest.approx(2.0)
    with pytest.raises(ValueError, match='undefined'):
        gmml.min_separation(gmml.MixtureModel.from_centers([0.0]))


def test_sample_log_likelihood_is_permutation_invariant():
    rng = np.random.default_rng(11)
    data = rng.normal(size=(100, 1)) * 3
    mu = np.array([[-2.0], [0.5], [4.0]])
    assert gmml.sample_log_likelihood(data, mu) == gmml.sample_log_likelihood(data, mu[::-1])


def test_sample_log_likelihood_needs_data():
    with pytest.raises(ValueError):
        gmml.sample_log_likelihood(np.empty((0, 1)), [0.0])


def test_json_round_trip():
    model = gmml.MixtureModel.from_centers([[0.0, 1.0], [2.0, -3.0]])
    assert gmml.MixtureModel.from_json(model.to_json()) == model
    assert repr(model) == 'gmml.MixtureModel(centers=[[0.0, 1.0], [2.0, -3.0]])'


def test_json_dim_mismatch():
    with pytest.raises(ValueError, match='Declared dim'):
        gmml.MixtureModel.from_json('{"dim": 2, "centers": [[0.0]]}')


@pytest.mark.parametrize('centers, x, expected', [
    ([-4.0, 4.0], 0.0, -8.0 - LOG_SQRT_2PI),
    ([-400.0, 400.0], 0.0, -80000.0 - LOG_SQRT_2PI),
])
def test_symmetric_density_at_the_midpoint(centers, x, expected):
    value = gmml.log_mixture_density(x, gmml.MixtureModel.from_centers(centers))
    assert np.isfinite(value)
    assert value == pytest.approx(expected, abs=1e-9)


def test_log_sum_exp_sandwich():
    rng = np.random.default_rng(21)
    for _ in range(500):
        count, dim = rng.integers(1, 6), rng.integers(1, 4)
        scale = 10.0 ** rng.uniform(0, 6)
        model = gmml.MixtureModel.from_centers(rng.normal(size=(count, dim)) * scale)
        x = rng.normal(size=dim) * scale
        top = max(gmml.log_gaussian_pdf(x, mu) for mu in model.centers)
        value = gmml.log_mixture_density(x, model)
        tol = 1e-9 * max(1.0, abs(top))
        assert top - math.log(count) - tol <= value <= top + tol


def test_responsibilities_example():
    weights = gmml.responsibilities(0.0, [0.0, 2.0])
    assert weights.weights == pytest.approx((0.8807971, 0.1192029), abs=1e-7)
    assert gmml.responsibilities([3.0], [[-7.0]]).weights == (1.0,)


def test_responsibilities_sum_to_one_at_every_scale():
    rng = np.random.default_rng(8)
    for _ in range(10_000):
        scale = 10.0 ** rng.uniform(0, 8)
        centers = rng.normal(size=(rng.integers(1, 6), 1)) * scale
        weights = np.array(gmml.responsibilities(rng.normal() * scale, centers).weights)
        assert abs(weights.sum() - 1.0) <= 1e-12
        assert np.all((weights >= 0) & (weights <= 1))


def test_empty_sample():
    assert gmml.sample(gmml.MixtureModel.from_centers([0.0]), 0, np.random.default_rng(0)) == []


def test_sample_labels_are_balanced():
    model = gmml.MixtureModel.from_centers([-10.0, 10.0])
    _, labels = gmml.sample_points(model, 10_000, np.random.default_rng(4))
    assert 0.47 <= labels.mean() <= 0.53


@pytest.mark.parametrize('centers, separation', [
    ([-4.0, 4.0], 8.0),
    ([-1.01, -0.99, 0.99, 1.01], 0.02),
    ([0.0, 3.0, 10.0], 3.0),
])
def test_min_separation_examples(centers, separation):
    assert gmml.min_separation(gmml.MixtureModel.from_centers(centers)) == pytest.approx(separation, abs=1e-12)


def test_sample_log_likelihood_examples():
    assert gmml.sample_log_likelihood([[0.0]], [-4.0, 4.0]) == pytest.approx(-8.0 - LOG_SQRT_2PI, abs=1e-9)
    assert gmml.sample_log_likelihood([[1.0, 2.0]], [[1.0, 2.0]]) == pytest.approx(-2 * LOG_SQRT_2PI, abs=1e-12)


def test_sample_log_likelihood_is_translation_invariant():
    rng = np.random.default_rng(12)
    data = rng.normal(size=(200, 1)) * 4
    mu = np.array([[-3.0], [0.0], [5.0]])
    shift = 123.456
    moved = gmml.sample_log_likelihood(data + shift, mu + shift)
    assert moved == pytest.approx(gmml.sample_log_likelihood(data, mu), abs=1e-9)
