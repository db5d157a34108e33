import io
import math

import pytest

import gmml
from gmml.lemmas import LEMMAS, lemmas_to_csv


def test_general_calc_example():
    report = gmml.check_lemma_general_calc([6.0, -60.0], [3.0, -58.0], 0, a=5.0)
    assert report.passed
    assert report.value == pytest.approx(3.0, abs=1e-3)
    assert report.bound == 0.0


def test_general_calc_single_center():
    report = gmml.check_lemma_general_calc([6.0], [3.0], 0, a=5.0)
    assert report.value == pytest.approx(6.0, abs=1e-9)


def test_general_calc_hypotheses():
    with pytest.raises(gmml.HypothesisViolation, match=r'a > log M \+ 3') as info:
        gmml.check_lemma_general_calc([6.0, -60.0], [3.0, -58.0], 0, a=2.0)
    assert info.value.lemma == 'general_calc'
    assert 'a true center in (a, 3a)' in info.value.violations


def test_general_calc_needs_matched_negative_centers():
    with pytest.raises(gmml.HypothesisViolation, match='negative true centers matched'):
        gmml.check_lemma_general_calc([6.0, -60.0], [3.0, -40.0], 0, a=5.0)


def test_general_calc_wider_matching_radius():
    report = gmml.check_lemma_general_calc([6.0, -60.0], [3.0, -52.0], 0, a=5.0, match_divisor=6.0)
    assert report.passed
    with pytest.raises(gmml.HypothesisViolation):
        gmml.check_lemma_general_calc([6.0, -60.0], [3.0, -52.0], 0, a=5.0, match_divisor=10.0)


def test_center_positive_single_candidate():
    report = gmml.check_lemma_center_positive(5.0, 5.0, [0.0], 0)
    assert report.value == pytest.approx(5.0, abs=1e-9)
    assert report.passed


def test_center_positive_strong_bound():
    report = gmml.check_lemma_center_positive(5.0, 5.0, [0.0], 0, strong=True)
    assert report.lemma == 'center_positive_strong'
    assert report.bound == pytest.approx(math.exp(-112.5))
    assert report.passed


def test_center_positive_with_competitors():
    report = gmml.check_lemma_center_positive(5.0, 6.0, [2.0, -1.0, 20.0], 0)
    assert report.passed


@pytest.mark.parametrize('kwargs', [
    {'a': 5.0, 'mu_star': 4.0, 'candidates': [0.0], 'index': 0},
    {'a': 5.0, 'mu_star': 6.0, 'candidates': [-1.0], 'index': 0},
    {'a': 5.0, 'mu_star': 16.0, 'candidates': [0.0], 'index': 0, 'strong': True},
    {'a': 5.0, 'mu_star': 6.0, 'candidates': [0.0], 'index': 1},
])
def test_center_positive_hypotheses(kwargs):
    with pytest.raises(gmml.HypothesisViolation):
        gmml.check_lemma_center_positive(**kwargs)


def test_center_negative_example():
    report = gmml.check_lemma_center_negative(12.0, [0.0, -12.0], 0)
    assert report.bound == pytest.approx(-36 * math.exp(-8))
    assert report.passed


def test_center_negative_far():
    assert gmml.check_lemma_center_negative(30.0, [0.0, -30.0], 0).passed


def test_center_negative_needs_anchor():
    with pytest.raises(gmml.HypothesisViolation, match='within r/6'):
        gmml.check_lemma_center_negative(12.0, [0.0, -5.0], 0)


@pytest.mark.parametrize('candidates, index', [([0.0], 0), ([0.0, 2.0], 0), ([3.0, -4.0, 9.0], 0)])
def test_wdifference(candidates, index):
    assert gmml.check_lemma_wdifference(candidates, index).passed


def test_wdifference_single_candidate():
    report = gmml.check_lemma_wdifference([0.0], 0)
    assert report.value == 0.0
    assert report.margin == pytest.approx(2.0)


def test_wdifference_edge_flag():
    assert gmml.check_lemma_wdifference([0.0, 100.0], 0).edge
    assert not gmml.check_lemma_wdifference([0.0, -100.0], 0).edge


def test_wdifference_needs_nonnegative_candidate():
    with pytest.raises(gmml.HypothesisViolation):
        gmml.check_lemma_wdifference([-1.0, 2.0], 0)


def test_lemma_suite():
    reports = gmml.lemma_suite(seed=0, per_lemma=10)
    assert len(reports) == 10 * len(LEMMAS)
    assert {r.lemma for r in reports} == set(LEMMAS)
    assert all(r.passed for r in reports)


def test_lemma_suite_is_reproducible():
    first = [r.margin for r in gmml.lemma_suite(seed=4, per_lemma=3)]
    second = [r.margin for r in gmml.lemma_suite(seed=4, per_lemma=3)]
    assert first == second


def test_lemma_suite_arguments():
    with pytest.raises(ValueError):
        gmml.lemma_suite(per_lemma=0)


def test_lemmas_csv():
    stream = io.StringIO()
    lemmas_to_csv(gmml.lemma_suite(seed=1, per_lemma=2), stream)
    lines = stream.getvalue().splitlines()
    assert lines[0] == 'lemma,value,bound,margin,pass,edge,configuration'
    assert len(lines) == 1 + 2 * len(LEMMAS)


def test_general_calc_counts_the_longer_center_list():
    truth = [10.0, -70.0]
    assert gmml.check_lemma_general_calc(truth, [3.0, -70.0], 0, a=6.5).passed
    with pytest.raises(gmml.HypothesisViolation, match=r'a > log M \+ 3'):
        gmml.check_lemma_general_calc(truth, [3.0, -70.0] + [20.0] * 38, 0, a=6.5)
