import math
from fractions import Fraction
from types import SimpleNamespace

import pytest
from hypothesis import given, strategies as st

from pyscora_quorum.params import (
    QuorumParams,
    buyer_settle_threshold,
    check_feasible_async,
    check_feasible_sync,
    corrupt_quorum_bound,
    exclusion_size,
    intersection_failure_bound,
    k2_prime,
    nonintersection_failure_bound,
    payment_amount,
    reply_threshold,
    settle_threshold,
    spend_fraction,
    validation_slack,
    witness_threshold,
)
from pyscora_quorum.utils import ConfigError, ParamsError


def test_validation_slack_and_k2_prime():
    p = QuorumParams(n=1500, f=100, m=60, k1=1, k2=24)

    assert validation_slack(p) == 20
    assert k2_prime(p) == 29
    assert spend_fraction(p) == Fraction(1, 29)
    assert payment_amount(p, 2900) == 100
    assert k2_prime(p.replace(f=0)) == 24


def test_k2_prime_rounds_up(canonical_params):
    assert k2_prime(canonical_params) == 32
    assert k2_prime(QuorumParams(n=1000, f=100, m=40, k1=1, k2=18)) == 26


def test_zero_slack_has_no_budget_separation():
    degenerate = SimpleNamespace(alpha=Fraction(1, 2), beta=Fraction(1, 2), m=10, f=1, k2=5)

    assert validation_slack(degenerate) == 0
    with pytest.raises(ParamsError, match='no adversary budget separation'):
        k2_prime(degenerate)


def test_thresholds(small_params):
    assert reply_threshold(small_params) == 5
    assert witness_threshold(small_params) == 4
    assert exclusion_size(small_params) == 0
    assert settle_threshold(small_params) == 22
    assert buyer_settle_threshold(small_params) == 19


def test_thresholds_at_canonical_point(canonical_params):
    assert reply_threshold(canonical_params) == 34
    assert witness_threshold(canonical_params) == 27
    assert exclusion_size(canonical_params) == 6


def test_nonintersection_bound_at_canonical_point(canonical_params):
    assert nonintersection_failure_bound(canonical_params) == pytest.approx(0.02845, abs=1e-4)


def test_intersection_bounds_at_canonical_point(canonical_params):
    assert intersection_failure_bound(canonical_params) == pytest.approx(0.4193, abs=1e-3)
    assert intersection_failure_bound(canonical_params, asynchronous=True) == pytest.approx(0.9485, abs=1e-3)


def test_bounds_raise_at_the_equality_boundary():
    p = QuorumParams(n=30, f=4, m=6, k1=1, k2=4)
    assert p.alpha1 + p.p_f == Fraction(1, 3)

    with pytest.raises(ParamsError, match='expected overlap exceeds'):
        nonintersection_failure_bound(p)
    with pytest.raises(ParamsError, match='expected correct overlap below'):
        intersection_failure_bound(p)


def test_nonintersection_bound_without_expected_overlap():
    # alpha1 is never zero, so force it through a bare namespace.
    p = SimpleNamespace(alpha=Fraction(1, 3), alpha1=Fraction(0), p_f=Fraction(0), m=10)

    assert nonintersection_failure_bound(p) == 0.0


def test_async_boundary_example_has_no_intersection_bound():
    p = QuorumParams(n=960, f=120, m=40, k1=1, k2=23)

    with pytest.raises(ParamsError):
        intersection_failure_bound(p, asynchronous=True)

    report = check_feasible_async(p)
    assert not report.passed
    assert report.conditions['n > 8f'] is False
    assert report.conditions['k1*m/n < 1/24'] is False
    assert report.bounds.delta_bound is None
    assert report.bounds.eps_bound is not None
    assert 'infeasible: expected correct overlap below β' in report.notes


def test_corrupt_quorum_bound():
    p = QuorumParams(n=2000, f=200, m=200, k1=1, k2=9)

    assert corrupt_quorum_bound(p) == pytest.approx(math.exp(-2))
    assert corrupt_quorum_bound(p, K=10) == 1.0
    assert corrupt_quorum_bound(p.replace(f=0)) == 1.0
    with pytest.raises(ParamsError):
        corrupt_quorum_bound(p, K=0)


def test_feasible_async_at_canonical_point(canonical_params):
    report = check_feasible_async(canonical_params)

    assert report.passed
    assert not report.outside_proven_regime
    assert report.bounds.k2_prime == 32
    assert report.bounds.delta_bound == pytest.approx(0.9485, abs=1e-3)


@pytest.mark.parametrize(
    'changes, failing',
    [
        ({'f': 125}, 'n > 8f'),
        ({'k1': 2, 'k2': 23}, 'k1*m/n < 1/24'),
        ({'k2': 20}, 'n = (k1+k2)*m'),
    ],
)
def test_feasible_async_reports_each_condition(canonical_params, changes, failing):
    report = check_feasible_async(canonical_params.replace(**changes))

    assert not report.passed
    assert [name for name, ok in report.conditions.items() if not ok] == [failing]


def test_feasible_sync(canonical_params):
    assert check_feasible_sync(canonical_params).passed
    assert not check_feasible_sync(QuorumParams(n=30, f=4, m=6, k1=1, k2=4)).conditions['alpha1 + p_f < alpha']


def test_non_canonical_ratios_are_flagged(canonical_params):
    report = check_feasible_sync(canonical_params.replace(alpha='1/4', beta='3/4'))

    assert report.outside_proven_regime
    assert 'outside proven regime' in report.notes


def test_report_serializes(canonical_params):
    data = check_feasible_async(canonical_params).to_dict()

    assert data['passed'] is True
    assert data['bounds']['k2_prime'] == 32
    assert set(data['conditions']) == {'n > 8f', 'k1*m/n < 1/24', 'n = (k1+k2)*m'}


@pytest.mark.parametrize(
    'config, diagnostic',
    [
        ({'n': 10, 'f': 1, 'm': 2, 'k1': 1}, 'params.k2: missing key.'),
        ({'n': 10, 'f': 1, 'm': 2, 'k1': 1, 'k2': 4, 'gamma': 1}, 'params.gamma: unknown key.'),
        ({'n': 10, 'f': 1, 'm': 20, 'k1': 1, 'k2': 4}, 'm must not exceed n'),
        ({'n': 10, 'f': 1, 'm': 2, 'k1': 4, 'k2': 4}, 'k1 must be smaller than k2'),
        ({'n': 10, 'f': 1, 'm': 2, 'k1': 1, 'k2': 4, 'alpha': '2/3', 'beta': '1/3'}, 'alpha must be smaller than beta'),
    ],
)
def test_from_dict_rejects_invalid_configs(config, diagnostic):
    with pytest.raises(ConfigError) as err:
        QuorumParams.from_dict(config)

    assert any(diagnostic in message for message in err.value.diagnostics)


def test_from_dict_reads_rational_strings():
    p = QuorumParams.from_dict({'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5, 'alpha': '1/4', 'beta': 0.75, 'mu': '1/3'})

    assert p.alpha == Fraction(1, 4)
    assert p.beta == Fraction(3, 4)
    assert p.mu == Fraction(1, 3)


@given(
    n=st.integers(min_value=10, max_value=2000),
    m=st.integers(min_value=1, max_value=60),
    f=st.integers(min_value=0, max_value=200),
    k2=st.integers(min_value=2, max_value=40),
)
def test_derived_quantities_are_consistent(n, m, f, k2):
    p = QuorumParams(n=n, f=min(f, n - 1), m=min(m, n), k1=1, k2=k2)

    assert k2_prime(p) >= p.k2
    assert witness_threshold(p) <= p.m
    assert reply_threshold(p) + exclusion_size(p) >= p.m
    assert buyer_settle_threshold(p) <= settle_threshold(p)
    assert 0.0 <= corrupt_quorum_bound(p) <= 1.0
