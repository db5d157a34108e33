from fractions import Fraction

import numpy as np
import pytest

import gmml
from gmml.experiments import trial_rng
from gmml.initialization import init_centers
from gmml.mixture import LabeledSample

EXACT = [(1, Fraction(1)), (2, Fraction(1)), (4, Fraction(1, 2)), (8, Fraction(39, 512))]


@pytest.fixture
def four_leaves():
    return gmml.TreeConstructionSpec(2, 1.0)


def test_random_init_is_reproducible():
    truth = gmml.MixtureModel.from_centers([-3.0, 0.0, 3.0])
    first = gmml.random_init(truth, np.random.default_rng(9))
    second = gmml.random_init(truth, np.random.default_rng(9))
    assert first == second
    assert len(first) == 3


def test_random_init_mean():
    truth = gmml.MixtureModel.from_centers([2.0])
    draws = [gmml.random_init(truth, trial_rng(0, i))[0].point[0] for i in range(10_000)]
    assert np.mean(draws) == pytest.approx(2.0, abs=0.05)


def test_labels_are_uniform():
    truth = gmml.MixtureModel.from_centers([0.0, 10.0, 20.0, 30.0])
    _, labels = gmml.sample_points(truth, 10_000, np.random.default_rng(2))
    frequencies = np.bincount(labels, minlength=4) / 10_000
    assert np.all((frequencies > 0.225) & (frequencies < 0.275))


def test_event_e_holds():
    truth = gmml.MixtureModel.from_centers([0.0, 10.0])
    assert gmml.event_e_holds([LabeledSample((0.0,), 0), LabeledSample((10.0,), 1)], truth)
    assert not gmml.event_e_holds([LabeledSample((2.001,), 0), LabeledSample((10.0,), 1)], truth)
    assert gmml.event_e_holds([LabeledSample((2.001,), 0)], truth, radius=3.0)
    with pytest.raises(ValueError, match='Label'):
        gmml.event_e_holds([LabeledSample((0.0,), 2)], truth)


def test_event_e_is_almost_sure():
    truth = gmml.MixtureModel.from_centers(np.arange(8.0) * 100)
    assert all(gmml.event_e_holds(gmml.random_init(truth, trial_rng(3, i)), truth) for i in range(10_000))
    assert gmml.event_e_probability(8) >= 1 - 16 * np.exp(-32)


def test_init_centers():
    init = [LabeledSample((1.0,), 0), LabeledSample((2.0,), 1)]
    np.testing.assert_array_equal(init_centers(init), [[1.0], [2.0]])


@pytest.mark.parametrize('count, probability', EXACT)
def test_exact_probability(count, probability):
    assert gmml.exact_good_init_probability(count) == probability


@pytest.mark.parametrize('count', [0, 3, 6])
def test_exact_probability_needs_power_of_two(count):
    with pytest.raises(ValueError, match='power of two'):
        gmml.exact_good_init_probability(count)


@pytest.mark.parametrize('count, probability', EXACT[1:])
def test_enumeration_matches_recursion(count, probability):
    assert gmml.enumerate_good_init_probability(count) == probability


def test_enumeration_of_pruned_tree():
    assert gmml.enumerate_good_init_probability(3) == Fraction(7, 9)


@pytest.mark.parametrize('count', [2, 4, 8, 16])
def test_recursion_bound(count):
    assert gmml.exact_good_init_probability(count) <= gmml.good_init_recursion_bound(count)


def test_balanced_split_is_good(four_leaves):
    result = gmml.classify_init([-1.01, -1.01, 0.99, 1.01], four_leaves)
    assert result.good
    assert result.reason == 'balanced-recurse'
    assert result.one_sided
    assert result.levels == (((2, 2),), ((2, 0), (1, 1)))


def test_uneven_split_is_bad(four_leaves):
    result = gmml.classify_init([-1.01, -0.99, -0.99, 1.01], four_leaves)
    assert not result.good
    assert result.reason == 'bad-split'
    assert '(3, 1)' in result.detail


def test_all_on_one_side_is_good(four_leaves):
    result = gmml.classify_init([0.99, 0.99, 1.01, 1.01], four_leaves)
    assert result.good
    assert result.reason == 'all-one-side'


def test_center_outside_the_urns_is_bad():
    result = gmml.classify_init([-1.0, 5.0], gmml.TreeConstructionSpec(1, 1.0))
    assert not result.good
    assert 'outside' in result.detail


def test_single_center_is_good(four_leaves):
    assert gmml.classify_init([0.3], four_leaves).reason == 'singleton'


@pytest.mark.parametrize('levels, probability', [(2, 0.5), (3, 39 / 512)])
def test_random_inits_match_exact_probability(levels, probability):
    spec = gmml.TreeConstructionSpec.faithful_scale(levels)
    truth = gmml.tree_construction(spec)
    trials = 2000
    good = sum(
        gmml.classify_init(init_centers(gmml.random_init(truth, trial_rng(5, i))), spec).good
        for i in range(trials))
    low, high = gmml.wilson_interval(good, trials, confidence=0.999)
    assert low <= probability <= high
