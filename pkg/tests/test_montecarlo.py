import csv
import json
import math

import pytest
from scipy import stats

from pyscora_quorum.montecarlo import (
    PRIOR_MODELS,
    REPORT_COLUMNS,
    TrialConfig,
    estimate_flip_budget,
    estimate_intersection,
    estimate_nonintersection,
    exact_intersection_probability,
    exact_nonintersection_probability,
    flip_ceiling,
    grind_quorums,
    run_point,
    trial_rng,
    wilson_interval,
    write_reports,
)
from pyscora_quorum.params import QuorumParams, corrupt_quorum_bound
from pyscora_quorum.utils import ConfigError, ParamsError

ORACLE_PARAMS = QuorumParams(24, 2, 4, 1, 5)

ORACLE_GRID = [
    (QuorumParams(n, f, m, 1, k2), PRIOR_MODELS[f % 2])
    for n, m, k2 in ((20, 4, 4), (24, 4, 5), (24, 6, 3), (30, 5, 5), (30, 6, 4), (30, 3, 6))
    for f in (0, 1, 2, 3)
]
ORACLE_IDS = [f'n{p.n}-f{p.f}-m{p.m}-k2{p.k2}-{prior}' for p, prior in ORACLE_GRID]


def test_trial_rng_is_per_trial():
    assert trial_rng(3, 0).integers(1 << 30) == trial_rng(3, 0).integers(1 << 30)
    assert trial_rng(3, 0).integers(1 << 30) != trial_rng(3, 1).integers(1 << 30)
    assert trial_rng(3, 0, 'a').integers(1 << 30) != trial_rng(3, 0, 'b').integers(1 << 30)


def test_wilson_interval():
    low, high = wilson_interval(0, 100)
    assert low == pytest.approx(0.0, abs=1e-12)
    assert 0 < high < 0.05

    low, high = wilson_interval(50, 100)
    assert low < 0.5 < high


def test_run_point_reports_every_property_and_mode():
    reports = run_point(TrialConfig(ORACLE_PARAMS, trials=200, seed=1))

    assert [(r.kind, r.mode) for r in reports] == [
        ('nonintersection', 'sync'),
        ('nonintersection', 'async'),
        ('intersection', 'sync'),
        ('intersection', 'async'),
    ]
    assert [r.accesses for r in reports] == [1, 1, 5, 5]
    assert all(r.exact != None for r in reports)
    assert all(r.ci_low <= r.rate <= r.ci_high for r in reports)


def test_same_seed_same_estimate():
    cfg = TrialConfig(ORACLE_PARAMS, trials=300, seed=9)

    assert [r.violations for r in run_point(cfg)] == [r.violations for r in run_point(cfg)]


@pytest.mark.parametrize('params, prior_model', ORACLE_GRID, ids=ORACLE_IDS)
def test_estimates_agree_with_exact_oracle(params, prior_model):
    cfg = TrialConfig(params, trials=1000, seed=3, prior_model=prior_model)

    for report in run_point(cfg):
        width = report.ci_high - report.ci_low
        assert abs(report.rate - report.exact) <= 3 * width, (report.kind, report.mode, report.exact)


def test_no_corruption_no_prior_quorums_never_violates_nonintersection():
    cfg = TrialConfig(ORACLE_PARAMS, trials=200, corrupt_model='none', accesses=0)

    sync, asynchronous = estimate_nonintersection(cfg)

    assert sync.violations == asynchronous.violations == 0
    assert sync.verdict == 'PASS'
    assert exact_nonintersection_probability(ORACLE_PARAMS, 0, corrupt_model='none') == 0.0


def test_no_prior_quorums_always_violates_intersection():
    cfg = TrialConfig(ORACLE_PARAMS, trials=200, accesses=0)

    sync, asynchronous = estimate_intersection(cfg)

    assert sync.rate == asynchronous.rate == 1.0
    assert exact_intersection_probability(ORACLE_PARAMS, 0) == pytest.approx(1.0)


def test_exact_oracle_is_limited_to_small_n(canonical_params):
    with pytest.raises(ParamsError):
        exact_nonintersection_probability(canonical_params)
    with pytest.raises(ParamsError):
        exact_intersection_probability(canonical_params)

    report = run_point(TrialConfig(canonical_params, trials=20))[0]
    assert report.exact == None


def test_balanced_prior_needs_room_for_disjoint_quorums():
    cfg = TrialConfig(ORACLE_PARAMS, trials=10, accesses=7)

    with pytest.raises(ParamsError):
        estimate_intersection(cfg)
    with pytest.raises(ParamsError):
        exact_intersection_probability(ORACLE_PARAMS, 7)


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_estimates_stay_under_the_analytic_bound(canonical_params, seed):
    cfg = TrialConfig(canonical_params, trials=10_000, seed=seed)

    reports = estimate_nonintersection(cfg) + estimate_intersection(cfg)

    assert [(r.kind, r.mode) for r in reports] == [
        ('nonintersection', 'sync'),
        ('nonintersection', 'async'),
        ('intersection', 'sync'),
        ('intersection', 'async'),
    ]
    for report in reports:
        assert report.bound != None
        assert report.ci_high <= report.bound, (report.kind, report.mode)
        assert report.verdict == 'PASS'


def test_greedy_flips_without_budget_stop_at_k2():
    p = QuorumParams(60, 0, 6, 1, 10)
    report = estimate_flip_budget(TrialConfig(p, seed=4), runs=20)

    assert report.ceiling == flip_ceiling(p) == p.k2 + 1
    assert report.achieved == [p.k2] * 20
    assert report.flips == [0] * 20
    assert report.verdict == 'PASS'


def test_greedy_flips_spend_the_budget_once():
    p = QuorumParams(60, 4, 6, 1, 10)
    report = estimate_flip_budget(TrialConfig(p, seed=4), runs=20)

    assert report.ceiling == 13
    assert min(report.achieved) >= p.k2 + 1
    assert report.flips == [p.f] * 20
    assert report.verdict == 'PASS'
    assert report.to_dict()['max_achieved'] == report.max_achieved


def test_grinding_more_nonces_finds_more_corrupted_members(canonical_params):
    cfg = TrialConfig(canonical_params, seed=8)

    single = grind_quorums(cfg, runs=150, tries=1)
    ground = grind_quorums(cfg, runs=150, tries=4)

    assert len(single.best) == 150
    assert all(many >= one for many, one in zip(ground.best, single.best))
    assert single.verdict == 'PASS'
    assert 0 <= single.tail_ceiling <= canonical_params.m + 1
    assert single.tail_ceiling <= ground.tail_ceiling


def test_estimates_are_monotone_in_the_access_counts():
    # Trials share their random streams across points, so a larger access count only grows the prior union.
    base = QuorumParams(200, 10, 10, 1, 10)

    nonintersection = [
        estimate_nonintersection(TrialConfig(base.replace(k1=k1), trials=1000, seed=6))
        for k1 in range(1, 6)
    ]
    intersection = [
        estimate_intersection(TrialConfig(base.replace(k2=k2), trials=1000, seed=6)) for k2 in range(2, 11)
    ]

    for mode in (0, 1):
        epsilons = [reports[mode].violations for reports in nonintersection]
        deltas = [reports[mode].violations for reports in intersection]
        assert epsilons == sorted(epsilons)
        assert deltas == sorted(deltas, reverse=True)
        assert epsilons[0] < epsilons[-1]
        assert deltas[0] > deltas[-1]


def test_corrupted_members_rarely_concentrate():
    p = QuorumParams(200, 20, 50, 1, 2)

    report = grind_quorums(TrialConfig(p, seed=12), runs=2000)

    assert report.bound == corrupt_quorum_bound(p)
    assert report.ci_high <= report.bound
    assert report.verdict == 'PASS'


def test_hits_need_strictly_more_corrupted_members_than_the_threshold(canonical_params):
    report = grind_quorums(TrialConfig(canonical_params, seed=8), runs=150)

    assert report.threshold == 6
    assert 6 in report.best
    assert report.hits == sum(1 for best in report.best if best > 6)


def test_grinding_stays_under_the_tail_ceiling(canonical_params):
    # The best of several nonces does cross (1+2mu) p_f m with the hypergeometric tail probability; only the
    # tail ceiling holds up to GRIND_TAIL_LEVEL per run.
    p = canonical_params
    tries, runs = 4, 500
    report = grind_quorums(TrialConfig(p, seed=5), runs=runs, tries=tries)

    limit = math.floor((1 + 2 * p.mu) * p.p_f * p.m)
    per_run = 1 - (1 - float(stats.hypergeom(p.n, p.f, p.m).sf(limit))) ** tries
    crossed = sum(1 for best in report.best if best > limit)

    assert 0 < crossed <= 3 * per_run * runs
    assert report.tail_ceiling > limit
    assert sum(1 for best in report.best if best >= report.tail_ceiling) <= 3


def test_write_reports(tmp_path):
    rows = [report.to_row() for report in run_point(TrialConfig(ORACLE_PARAMS, trials=50))]

    csv_path = tmp_path / 'reports.csv'
    write_reports(rows, str(csv_path))
    with open(csv_path, newline='') as file:
        reader = csv.DictReader(file)
        assert reader.fieldnames == REPORT_COLUMNS
        assert len(list(reader)) == 4

    json_path = tmp_path / 'reports.json'
    write_reports(rows, str(json_path), fmt='json')
    loaded = json.loads(json_path.read_text())
    assert [row['kind'] for row in loaded] == ['nonintersection'] * 2 + ['intersection'] * 2


def test_trial_config_points():
    configs = TrialConfig.from_dict(
        {
            'params': {'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5},
            'trials': 100,
            'points': [{'m': 3}, {'f': 1, 'accesses': 2}],
        }
    )

    assert [cfg.params.m for cfg in configs] == [3, 4]
    assert [cfg.params.f for cfg in configs] == [2, 1]
    assert [cfg.accesses for cfg in configs] == [None, 2]
    assert all(cfg.trials == 100 for cfg in configs)


@pytest.mark.parametrize(
    'config',
    [
        {'trials': 10},
        {'params': {'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5}, 'trials': 0},
        {'params': {'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5}, 'prior_model': 'clustered'},
        {'params': {'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5}, 'corrupt_model': 'all'},
        {'params': {'n': 24, 'f': 2, 'm': 4, 'k1': 1, 'k2': 5}, 'rounds': 3},
    ],
)
def test_trial_config_rejects(config):
    with pytest.raises(ConfigError):
        TrialConfig.from_dict(config)
