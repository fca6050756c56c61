import csv
import json
import math
import hashlib
import numpy as np
from fractions import Fraction
from dataclasses import dataclass, field
from scipy import stats
from typing import Any, Callable, Dict, List, Sequence, Tuple
from ..crypto import new_nonce
from ..params import (
    QuorumParams,
    corrupt_quorum_bound,
    exclusion_size,
    intersection_failure_bound,
    nonintersection_failure_bound,
    validation_slack,
    witness_threshold,
    k2_prime,
)
from ..selection import select_quorum
from ..utils import setup_logger, get_data_decoded, validate_schema, ConfigError, ParamsError
from ..constants import CONFIDENCE_LEVEL, DEFAULT_TRIALS, EXACT_ORACLE_MAX_N, GRIND_TAIL_LEVEL

logger = setup_logger('Monte Carlo')

PRIOR_MODELS = ('balanced', 'independent')
CORRUPT_MODELS = ('random-prefix', 'none')
MODES = ('sync', 'async')

REPORT_COLUMNS = [
    'kind',
    'mode',
    'n',
    'f',
    'm',
    'k1',
    'k2',
    'alpha',
    'beta',
    'mu',
    'accesses',
    'prior_model',
    'corrupt_model',
    'seed',
    'trials',
    'violations',
    'rate',
    'ci_low',
    'ci_high',
    'bound',
    'exact',
    'verdict',
]

Judge = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[bool, bool]]


@dataclass(frozen=True)
class TrialConfig:
    """One parameter point of a Monte Carlo experiment.

    `prior_model` decides how the prior quorums are drawn: `balanced` takes disjoint blocks of a random
    permutation (the coverage the analytic bounds assume), `independent` draws each one uniformly.
    `accesses` overrides the number of prior quorums, k1 for non-intersection and k2 for intersection.
    """

    TRIAL_CONFIG_SCHEMA = {
        'params': dict,
        'trials': int,  # Optional. Default is 10000.
        'seed': int,  # Optional. Default is 0.
        'prior_model': str,  # Optional. Default is 'balanced'.
        'corrupt_model': str,  # Optional. Default is 'random-prefix'.
        'accesses': int,  # Optional. Default is k1 / k2.
        'points': List[Dict[str, Any]],  # Optional. Parameter overrides forming a sweep.
        'flip_runs': int,  # Optional. Default is 100.
        'grind_tries': int,  # Optional. Default is 1.
    }

    params: QuorumParams
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    prior_model: str = 'balanced'
    corrupt_model: str = 'random-prefix'
    accesses: int | None = None

    def __post_init__(self) -> None:
        errors = []
        if self.trials < 1:
            errors.append('trials: must be at least 1.')
        if self.prior_model not in PRIOR_MODELS:
            errors.append(f'prior_model: expected one of {list(PRIOR_MODELS)}.')
        if self.corrupt_model not in CORRUPT_MODELS:
            errors.append(f'corrupt_model: expected one of {list(CORRUPT_MODELS)}.')
        if self.accesses != None and self.accesses < 0:
            errors.append('accesses: must be non-negative.')

        if errors:
            raise ConfigError('Invalid trial config.', errors)

    def replace(self, **changes: Any) -> 'TrialConfig':
        values = {
            'params': self.params,
            'trials': self.trials,
            'seed': self.seed,
            'prior_model': self.prior_model,
            'corrupt_model': self.corrupt_model,
            'accesses': self.accesses,
        }
        values.update(**changes)

        return TrialConfig(**values)

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> List['TrialConfig']:
        """Build every parameter point described by a trial file

        Args:
            config (Dict[str, Any]): Mapping with the keys of `TRIAL_CONFIG_SCHEMA`.

        Raises:
            ConfigError: If keys are unknown, missing or invalid.

        Returns:
            List[TrialConfig]: One config per point, or a single one when `points` is absent.
        """

        is_valid, err_msgs = validate_schema(config, cls.TRIAL_CONFIG_SCHEMA, required=('params',))
        if not is_valid:
            for err_msg in err_msgs:
                logger.critical(f'[from_dict] {err_msg}')

            raise ConfigError('Invalid trial config object.', err_msgs)

        base = QuorumParams.from_dict(config['params'])
        common = {key: config[key] for key in ('trials', 'seed', 'prior_model', 'corrupt_model', 'accesses') if key in config}

        points = config.get('points') or [{}]
        trial_configs = []
        for index, point in enumerate(points):
            overrides = dict(point)
            accesses = overrides.pop('accesses', common.get('accesses'))
            params = base.replace(**overrides) if overrides else base
            trial_configs.append(cls(params=params, **{**common, 'accesses': accesses}))
            logger.debug(f'[from_dict] point {index}: {params.to_dict()}')

        return trial_configs


@dataclass
class EstimateReport:
    kind: str
    mode: str
    config: TrialConfig
    accesses: int
    violations: int
    ci_low: float
    ci_high: float
    bound: float | None
    exact: float | None = None

    @property
    def trials(self) -> int:
        return self.config.trials

    @property
    def rate(self) -> float:
        return self.violations / self.trials

    @property
    def verdict(self) -> str:
        """PASS when the empirical upper confidence limit sits under the analytic bound.

        A run without violations never contradicts a bound. Without a bound the verdict is INCONCLUSIVE.
        """

        if self.violations == 0:
            return 'PASS'
        if self.bound == None:
            return 'INCONCLUSIVE'

        return 'PASS' if self.ci_high <= self.bound else 'FAIL'

    def to_row(self) -> Dict[str, Any]:
        p = self.config.params

        return get_data_decoded(
            {
                'kind': self.kind,
                'mode': self.mode,
                **p.to_dict(),
                'accesses': self.accesses,
                'prior_model': self.config.prior_model,
                'corrupt_model': self.config.corrupt_model,
                'seed': self.config.seed,
                'trials': self.trials,
                'violations': self.violations,
                'rate': self.rate,
                'ci_low': self.ci_low,
                'ci_high': self.ci_high,
                'bound': self.bound,
                'exact': self.exact,
                'verdict': self.verdict,
            }
        )


@dataclass
class FlipBudgetReport:
    config: TrialConfig
    ceiling: int
    achieved: List[int] = field(default_factory=list)
    flips: List[int] = field(default_factory=list)

    @property
    def max_achieved(self) -> int:
        return max(self.achieved, default=0)

    @property
    def verdict(self) -> str:
        return 'PASS' if all(count <= self.ceiling for count in self.achieved) else 'FAIL'

    def to_dict(self) -> Dict[str, Any]:
        return get_data_decoded(
            {
                'kind': 'flip-budget',
                'prior_model': self.config.prior_model,
                'params': self.config.params.to_dict(),
                'seed': self.config.seed,
                'runs': len(self.achieved),
                'ceiling': self.ceiling,
                'max_achieved': self.max_achieved,
                'mean_achieved': float(np.mean(self.achieved)) if self.achieved else 0.0,
                'max_flips': max(self.flips, default=0),
                'verdict': self.verdict,
            }
        )


@dataclass
class GrindReport:
    config: TrialConfig
    tries: int
    threshold: Fraction
    best: List[int]
    hits: int
    ci_low: float
    ci_high: float
    bound: float
    tail_ceiling: int

    @property
    def verdict(self) -> str:
        return 'PASS' if self.hits == 0 or self.ci_high <= self.bound else 'FAIL'

    def to_dict(self) -> Dict[str, Any]:
        return get_data_decoded(
            {
                'kind': 'grind',
                'params': self.config.params.to_dict(),
                'seed': self.config.seed,
                'runs': len(self.best),
                'tries': self.tries,
                'threshold': self.threshold,
                'hits': self.hits,
                'rate': self.hits / len(self.best) if self.best else 0.0,
                'ci_low': self.ci_low,
                'ci_high': self.ci_high,
                'bound': self.bound,
                'max_best': max(self.best, default=0),
                'tail_ceiling': self.tail_ceiling,
                'verdict': self.verdict,
            }
        )


@dataclass(frozen=True)
class UniformityReport:
    n: int
    m: int
    samples: int
    statistic: float
    pvalue: float

    @property
    def verdict(self) -> str:
        return 'PASS' if self.pvalue > 0.01 else 'FAIL'


def trial_rng(seed: int, index: int, salt: str = '') -> np.random.Generator:
    """Independent generator per trial, derived by hashing the master seed with the trial index."""

    digest = hashlib.sha256(f'{salt}:{seed}:{index}'.encode('utf-8')).digest()

    return np.random.default_rng(int.from_bytes(digest[:16], 'big'))


def wilson_interval(successes: int, trials: int, confidence: float = CONFIDENCE_LEVEL) -> Tuple[float, float]:
    ci = stats.binomtest(successes, trials).proportion_ci(confidence_level=confidence, method='wilson')

    return float(ci.low), float(ci.high)


def _draw_corrupted(rng: np.random.Generator, n: int, f: int, corrupt_model: str) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if corrupt_model == 'random-prefix' and f > 0:
        mask[rng.choice(n, size=f, replace=False)] = True

    return mask


def _draw_prior_union(rng: np.random.Generator, n: int, m: int, accesses: int, prior_model: str) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    if accesses == 0:
        return mask

    if prior_model == 'balanced':
        if accesses * m > n:
            raise ParamsError(f'balanced prior model needs accesses*m <= n, got {accesses}*{m} > {n}')
        mask[rng.permutation(n)[: accesses * m]] = True
    else:
        for _ in range(accesses):
            mask[rng.choice(n, size=m, replace=False)] = True

    return mask


def _run_trials(cfg: TrialConfig, accesses: int, judge: Judge, salt: str) -> Tuple[int, int]:
    p = cfg.params
    violations = {'sync': 0, 'async': 0}

    for index in range(cfg.trials):
        rng = trial_rng(cfg.seed, index, salt)
        corrupted = _draw_corrupted(rng, p.n, p.f, cfg.corrupt_model)
        union = _draw_prior_union(rng, p.n, p.m, accesses, cfg.prior_model)
        quorum = rng.choice(p.n, size=p.m, replace=False)

        sync, asynchronous = judge(corrupted, union, quorum)
        violations['sync'] += sync
        violations['async'] += asynchronous

    return violations['sync'], violations['async']


def _bound_or_none(bound: Callable[[], float]) -> float | None:
    try:
        return bound()
    except ParamsError as err:
        logger.debug(f'[bound] no analytic bound: {err}')
        return None


def _reports(
    kind: str, cfg: TrialConfig, accesses: int, counts: Tuple[int, int], bounds: Tuple[float | None, float | None]
) -> List[EstimateReport]:
    exact = None
    if cfg.params.n <= EXACT_ORACLE_MAX_N:
        exact = EXACT_ORACLES[kind]

    reports = []
    for mode, violations, bound in zip(MODES, counts, bounds):
        low, high = wilson_interval(violations, cfg.trials)
        reports.append(
            EstimateReport(
                kind=kind,
                mode=mode,
                config=cfg,
                accesses=accesses,
                violations=violations,
                ci_low=low,
                ci_high=high,
                bound=bound,
                exact=None
                if exact == None
                else exact(cfg.params, accesses, cfg.prior_model, cfg.corrupt_model, mode == 'async'),
            )
        )

    return reports


def estimate_nonintersection(cfg: TrialConfig) -> List[EstimateReport]:
    """Frequency with which a fresh quorum overlaps the corrupted set plus k1 prior quorums in more than alpha*m members.

    In async mode the adversary removes up to `(1+mu) p_f m` members of the fresh quorum. Removing a member of
    the overlap can only help the honest side, so the worst exclusion leaves the overlap untouched.

    Returns:
        List[EstimateReport]: The sync and the async estimate, in that order.
    """

    p = cfg.params
    accesses = p.k1 if cfg.accesses == None else cfg.accesses
    limit = p.alpha * p.m

    def judge(corrupted: np.ndarray, union: np.ndarray, quorum: np.ndarray) -> Tuple[bool, bool]:
        overlap = int((corrupted | union)[quorum].sum())
        violated = overlap > limit

        return violated, violated

    counts = _run_trials(cfg, accesses, judge, 'nonintersection')
    bound = _bound_or_none(lambda: nonintersection_failure_bound(p))
    logger.info(f'[estimate_nonintersection] {counts[0]}/{cfg.trials} violations, bound {bound}')

    return _reports('nonintersection', cfg, accesses, counts, (bound, bound))


def estimate_intersection(cfg: TrialConfig) -> List[EstimateReport]:
    """Frequency with which the correct overlap of a fresh quorum with k2 prior quorums does not exceed beta*m.

    In async mode the adversary silences the `(1+mu) p_f m` overlap members that would have reported the conflict.

    Returns:
        List[EstimateReport]: The sync and the async estimate, in that order.
    """

    p = cfg.params
    accesses = p.k2 if cfg.accesses == None else cfg.accesses
    limit = p.beta * p.m
    excluded = exclusion_size(p)

    def judge(corrupted: np.ndarray, union: np.ndarray, quorum: np.ndarray) -> Tuple[bool, bool]:
        overlap = int((union & ~corrupted)[quorum].sum())

        return overlap <= limit, max(0, overlap - excluded) <= limit

    counts = _run_trials(cfg, accesses, judge, 'intersection')
    bounds = (
        _bound_or_none(lambda: intersection_failure_bound(p, asynchronous=False)),
        _bound_or_none(lambda: intersection_failure_bound(p, asynchronous=True)),
    )
    logger.info(f'[estimate_intersection] {counts[0]}/{cfg.trials} sync, {counts[1]}/{cfg.trials} async violations')

    return _reports('intersection', cfg, accesses, counts, bounds)


def run_point(cfg: TrialConfig) -> List[EstimateReport]:
    return estimate_nonintersection(cfg) + estimate_intersection(cfg)


def _check_exact(p: QuorumParams) -> None:
    if p.n > EXACT_ORACLE_MAX_N:
        raise ParamsError(f'exact oracle limited to n <= {EXACT_ORACLE_MAX_N}, got n={p.n}')


def _union_size_distribution(n: int, m: int, accesses: int, prior_model: str) -> Dict[int, float]:
    if accesses == 0:
        return {0: 1.0}
    if prior_model == 'balanced':
        if accesses * m > n:
            raise ParamsError(f'balanced prior model needs accesses*m <= n, got {accesses}*{m} > {n}')
        return {accesses * m: 1.0}

    dist = {0: 1.0}
    for _ in range(accesses):
        following: Dict[int, float] = {}
        for size, prob in dist.items():
            law = stats.hypergeom(n, size, m)
            for shared in range(max(0, m - (n - size)), min(m, size) + 1):
                weight = prob * float(law.pmf(shared))
                if weight > 0:
                    following[size + m - shared] = following.get(size + m - shared, 0.0) + weight
        dist = following

    return dist


def _overlap_with_corrupted(n: int, f: int, union_sizes: Dict[int, float]) -> List[Tuple[int, int, float]]:
    """Joint law of (union size, corrupted members inside the union) for a uniform corrupted set of size f."""

    joint = []
    for size, prob in union_sizes.items():
        law = stats.hypergeom(n, size, f)
        for shared in range(max(0, f - (n - size)), min(f, size) + 1):
            weight = prob * float(law.pmf(shared))
            if weight > 0:
                joint.append((size, shared, weight))

    return joint


def exact_nonintersection_probability(
    p: QuorumParams,
    accesses: int | None = None,
    prior_model: str = 'balanced',
    corrupt_model: str = 'random-prefix',
    asynchronous: bool = False,
) -> float:
    """Exact non-intersection violation probability by hypergeometric composition. Only for n <= 30.

    Raises:
        ParamsError: If n is above the oracle limit.
    """

    _check_exact(p)
    accesses = p.k1 if accesses == None else accesses
    f = p.f if corrupt_model == 'random-prefix' else 0
    limit = math.floor(p.alpha * p.m)

    total = 0.0
    for size, shared, weight in _overlap_with_corrupted(p.n, f, _union_size_distribution(p.n, p.m, accesses, prior_model)):
        bad = size + f - shared
        total += weight * float(stats.hypergeom(p.n, bad, p.m).sf(limit))

    return total


def exact_intersection_probability(
    p: QuorumParams,
    accesses: int | None = None,
    prior_model: str = 'balanced',
    corrupt_model: str = 'random-prefix',
    asynchronous: bool = False,
) -> float:
    _check_exact(p)
    accesses = p.k2 if accesses == None else accesses
    f = p.f if corrupt_model == 'random-prefix' else 0
    limit = math.floor(p.beta * p.m) + (exclusion_size(p) if asynchronous else 0)

    total = 0.0
    for size, shared, weight in _overlap_with_corrupted(p.n, f, _union_size_distribution(p.n, p.m, accesses, prior_model)):
        correct = size - shared
        total += weight * float(stats.hypergeom(p.n, correct, p.m).cdf(limit))

    return min(1.0, total)


EXACT_ORACLES = {
    'nonintersection': exact_nonintersection_probability,
    'intersection': exact_intersection_probability,
}


def flip_ceiling(p: QuorumParams) -> int:
    return p.k2 + math.floor(Fraction(p.f) / validation_slack(p)) + 1


def _greedy_accesses(rng: np.random.Generator, p: QuorumParams, prior_model: str, attempts: int) -> Tuple[int, int]:
    validated = np.zeros(p.n, dtype=bool)
    corrupted = np.zeros(p.n, dtype=bool)
    needed = witness_threshold(p)
    budget = p.f
    achieved = flips = 0

    blocks = rng.permutation(p.n) if prior_model == 'balanced' and p.k2 * p.m <= p.n else None

    for attempt in range(attempts):
        if blocks is not None and attempt < p.k2:
            quorum = blocks[attempt * p.m : (attempt + 1) * p.m]
        else:
            quorum = rng.choice(p.n, size=p.m, replace=False)

        honest = quorum[~corrupted[quorum]]
        refusers = honest[validated[honest]]
        deficit = needed - (len(quorum) - len(refusers))

        if 0 < deficit <= budget:
            corrupted[refusers[:deficit]] = True
            budget -= deficit
            flips += deficit
            deficit = 0

        validated[honest[~validated[honest]]] = True
        if deficit <= 0:
            achieved += 1

    return achieved, flips


def estimate_flip_budget(cfg: TrialConfig, runs: int = 100, attempts: int | None = None) -> FlipBudgetReport:
    """Replay the greedy adaptive double-spender against one fund

    Every access draws a quorum. Members that already validated the fund refuse, fresh and corrupted members
    approve. When approvals fall short of the witness threshold the adversary corrupts just enough refusers,
    as long as its budget of f validators lasts.

    Args:
        cfg (TrialConfig): Parameter point; `prior_model` decides whether the first k2 accesses are disjoint.
        runs (int, optional): Independent seeded runs. Defaults to 100.
        attempts (int | None, optional): Accesses tried per run. Defaults to 4*k2'.

    Returns:
        FlipBudgetReport: Achieved access counts against the ceiling k2 + floor(f/slack) + 1.
    """

    p = cfg.params
    attempts = attempts or 4 * k2_prime(p)
    report = FlipBudgetReport(config=cfg, ceiling=flip_ceiling(p))

    for run in range(runs):
        achieved, flips = _greedy_accesses(trial_rng(cfg.seed, run, 'flip-budget'), p, cfg.prior_model, attempts)
        report.achieved.append(achieved)
        report.flips.append(flips)

    logger.info(f'[estimate_flip_budget] max achieved {report.max_achieved} against ceiling {report.ceiling}')

    return report


def grind_quorums(cfg: TrialConfig, runs: int | None = None, tries: int = 1) -> GrindReport:
    """Corrupted-member concentration in quorums drawn through `select_quorum`

    Each run corrupts a uniform set of f validators, then a seller grinds `tries` nonces and keeps the quorum
    with most corrupted members. A hit is a kept quorum with more than (1+mu) p_f m corrupted members, which
    the analytic bound caps at `tries * exp(-mu^2 p_f m / (2+mu))`.
    """

    p = cfg.params
    runs = cfg.trials if runs == None else runs
    threshold = (1 + p.mu) * p.p_f * p.m
    best = []

    for run in range(runs):
        rng = trial_rng(cfg.seed, run, 'grind')
        corrupted = _draw_corrupted(rng, p.n, p.f, 'random-prefix')
        tid = hashlib.sha256(f'grind:{cfg.seed}:{run}'.encode('utf-8')).digest()
        counts = [
            int(corrupted[list(select_quorum(tid, new_nonce(rng), p.n, p.m))].sum()) for _ in range(tries)
        ]
        best.append(max(counts))

    hits = sum(1 for count in best if count > threshold)
    low, high = wilson_interval(hits, runs)

    law = stats.hypergeom(p.n, p.f, p.m)
    tail_ceiling = next(c for c in range(p.m + 2) if tries * float(law.sf(c - 1)) <= GRIND_TAIL_LEVEL)

    return GrindReport(
        config=cfg,
        tries=tries,
        threshold=threshold,
        best=best,
        hits=hits,
        ci_low=low,
        ci_high=high,
        bound=corrupt_quorum_bound(p, K=tries),
        tail_ceiling=tail_ceiling,
    )


def selection_uniformity(n: int, m: int, samples: int, seed: int = 0) -> UniformityReport:
    """Chi-square goodness of fit of validator membership counts over `samples` seeded quorum draws."""

    counts = np.zeros(n, dtype=np.int64)
    tid = hashlib.sha256(f'uniformity:{seed}'.encode('utf-8')).digest()

    for index in range(samples):
        N_s = hashlib.sha256(f'{seed}:{index}'.encode('utf-8')).digest()[:16]
        counts[list(select_quorum(tid, N_s, n, m))] += 1

    result = stats.chisquare(counts)

    return UniformityReport(n=n, m=m, samples=samples, statistic=float(result.statistic), pvalue=float(result.pvalue))


def write_reports(rows: Sequence[Dict[str, Any]], file_path: str, fmt: str = 'csv') -> None:
    """Write report rows as CSV (one row per point, property and mode) or as a JSON list."""

    with open(file_path, 'w', encoding='utf-8', newline='') as file:
        if fmt == 'json':
            json.dump(get_data_decoded(list(rows)), file, indent=2, sort_keys=True)
            return

        columns = REPORT_COLUMNS + sorted({key for row in rows for key in row} - set(REPORT_COLUMNS))
        writer = csv.DictWriter(file, fieldnames=columns, extrasaction='ignore')
        writer.writeheader()
        for row in rows:
            writer.writerow({key: '' if value == None else value for key, value in row.items()})


__all__ = [
    'TrialConfig',
    'EstimateReport',
    'FlipBudgetReport',
    'GrindReport',
    'UniformityReport',
    'trial_rng',
    'wilson_interval',
    'estimate_nonintersection',
    'estimate_intersection',
    'run_point',
    'exact_nonintersection_probability',
    'exact_intersection_probability',
    'flip_ceiling',
    'estimate_flip_budget',
    'grind_quorums',
    'selection_uniformity',
    'write_reports',
]
