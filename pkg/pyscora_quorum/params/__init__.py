import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Type, Union
from ..utils import setup_logger, parse_fraction, validate_schema, ParamsError, ConfigError

logger = setup_logger('Quorum Params')

CANONICAL_ALPHA = Fraction(1, 3)
CANONICAL_BETA = Fraction(2, 3)
ASYNC_MAX_CORRUPT_RATIO = Fraction(1, 8)
ASYNC_MAX_ACCESS_RATIO = Fraction(1, 24)

Rational = Union[int, float, str, Fraction]


@dataclass(frozen=True)
class QuorumParams:
    """Parameter tuple of a (k1,k2)-quorum system.

    `alpha`, `beta` and `mu` are kept as exact rationals so that thresholds such as
    `(beta - alpha) * m` never suffer float rounding.
    """

    PARAMS_CONFIG_SCHEMA = {
        'n': int,
        'f': int,
        'm': int,
        'k1': int,
        'k2': int,
        'alpha': Rational,  # Optional. Default is 1/3.
        'beta': Rational,  # Optional. Default is 2/3.
        'mu': Rational,  # Optional. Default is 1/2.
    }

    n: int
    f: int
    m: int
    k1: int
    k2: int
    alpha: Fraction = CANONICAL_ALPHA
    beta: Fraction = CANONICAL_BETA
    mu: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        for name in ('alpha', 'beta', 'mu'):
            try:
                object.__setattr__(self, name, parse_fraction(getattr(self, name)))
            except (ValueError, ZeroDivisionError) as err:
                raise ParamsError(f'{name} is not a rational: {err}') from err

        errors = []
        if self.n < 1:
            errors.append('n must be positive')
        if self.f < 0:
            errors.append('f must be non-negative')
        if self.m < 1:
            errors.append('m must be positive')
        if self.k1 < 1:
            errors.append('k1 must be positive')
        if self.m > self.n:
            errors.append('m must not exceed n')
        if self.f >= self.n:
            errors.append('f must be smaller than n')
        if self.k1 >= self.k2:
            errors.append('k1 must be smaller than k2')
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            errors.append('alpha and beta must lie in (0,1)')
        if self.alpha >= self.beta:
            errors.append('alpha must be smaller than beta')
        if not 0 < self.mu < 1:
            errors.append('mu must lie in (0,1)')

        if errors:
            raise ParamsError(f'Invalid quorum parameters: {"; ".join(errors)}.')

    @property
    def p_f(self) -> Fraction:
        return Fraction(self.f, self.n)

    @property
    def alpha1(self) -> Fraction:
        return Fraction(self.k1 * self.m, self.n)

    @property
    def is_canonical(self) -> bool:
        return self.alpha == CANONICAL_ALPHA and self.beta == CANONICAL_BETA

    def replace(self, **changes: Any) -> 'QuorumParams':
        values = self.to_dict()
        values.update(**changes)

        return QuorumParams.from_dict(values)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'f': self.f,
            'm': self.m,
            'k1': self.k1,
            'k2': self.k2,
            'alpha': self.alpha,
            'beta': self.beta,
            'mu': self.mu,
        }

    @classmethod
    def from_dict(cls, config: Dict[str, Any], path: str = 'params.') -> 'QuorumParams':
        """Build parameters from a configuration mapping

        Args:
            config (Dict[str, Any]): Mapping with the keys of `PARAMS_CONFIG_SCHEMA`.
            path (str, optional): Prefix used in diagnostics. Defaults to 'params.'.

        Raises:
            ConfigError: If keys are unknown, missing or of the wrong type, or values break the invariants.

        Returns:
            QuorumParams: The parameter tuple.
        """

        is_valid, err_msgs = validate_schema(
            config, cls.PARAMS_CONFIG_SCHEMA, path=path, required=('n', 'f', 'm', 'k1', 'k2')
        )
        if not is_valid:
            for err_msg in err_msgs:
                logger.critical(f'[from_dict] {err_msg}')

            raise ConfigError('Invalid params config object.', err_msgs)

        try:
            return cls(**config)
        except ParamsError as err:
            logger.critical(f'[from_dict] {path}: {err}')
            raise ConfigError('Invalid params config object.', [f'{path}: {err}']) from err


@dataclass(frozen=True)
class DerivedBounds:
    validation_slack: Fraction
    k2_prime: int
    spend_fraction: Fraction
    eps_bound: float | None
    delta_bound: float | None


@dataclass
class FeasibilityReport:
    params: QuorumParams
    conditions: Dict[str, bool]
    bounds: DerivedBounds | None
    outside_proven_regime: bool
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    def to_dict(self) -> Dict[str, Any]:
        return {
            'params': self.params.to_dict(),
            'conditions': self.conditions,
            'passed': self.passed,
            'outside_proven_regime': self.outside_proven_regime,
            'bounds': None
            if self.bounds == None
            else {
                'validation_slack': self.bounds.validation_slack,
                'k2_prime': self.bounds.k2_prime,
                'spend_fraction': self.bounds.spend_fraction,
                'eps_bound': self.bounds.eps_bound,
                'delta_bound': self.bounds.delta_bound,
            },
            'notes': self.notes,
        }


def _clamp(value: float) -> float:
    return min(1.0, max(0.0, value))


def validation_slack(p: QuorumParams) -> Fraction:
    return (p.beta - p.alpha) * p.m


def k2_prime(p: QuorumParams) -> int:
    """Number of partial spends a fund must absorb: `k2 + ceil(f / slack)`.

    Raises:
        ParamsError: If the validation slack is zero.
    """

    slack = validation_slack(p)
    if slack <= 0:
        raise ParamsError('no adversary budget separation')

    return p.k2 + math.ceil(Fraction(p.f) / slack)


def spend_fraction(p: QuorumParams) -> Fraction:
    return Fraction(1, k2_prime(p))


def payment_amount(p: QuorumParams, balance: int) -> int:
    return balance // k2_prime(p)


def reply_threshold(p: QuorumParams) -> int:
    return math.ceil(p.m - (1 + p.mu) * p.p_f * p.m)


def witness_threshold(p: QuorumParams) -> int:
    return math.ceil((1 - p.alpha) * p.m)


def exclusion_size(p: QuorumParams) -> int:
    return math.floor((1 + p.mu) * p.p_f * p.m)


def settle_threshold(p: QuorumParams) -> int:
    return p.n - p.f


def buyer_settle_threshold(p: QuorumParams) -> int:
    return p.n - 2 * p.f


def nonintersection_failure_bound(p: QuorumParams) -> float:
    """Chernoff upper-tail bound on the probability that a fresh quorum overlaps too much.

    Raises:
        ParamsError: If `alpha1 + p_f >= alpha`.
    """

    expected = p.alpha1 + p.p_f
    if expected >= p.alpha:
        raise ParamsError('infeasible: expected overlap exceeds α')
    if expected == 0:
        return 0.0

    r = float(p.alpha / expected - 1)

    return _clamp(math.exp(-(r**2) * float(expected) * p.m / 3))


def intersection_failure_bound(p: QuorumParams, asynchronous: bool = False) -> float:
    """Chernoff lower-tail bound on the probability that the correct overlap stays at or below `beta * m`.

    Args:
        p (QuorumParams): Parameters.
        asynchronous (bool, optional): Also exclude `(1+mu) p_f m` silenced members. Defaults to False.

    Raises:
        ParamsError: If the expected correct overlap is not above `beta`.

    Returns:
        float: Bound in [0,1].
    """

    lost = p.alpha1 + (2 + p.mu) * p.p_f if asynchronous else p.alpha1 + p.p_f
    expected = 1 - lost
    if expected <= p.beta:
        raise ParamsError('infeasible: expected correct overlap below β')

    r = float(1 - p.beta / expected)

    return _clamp(math.exp(-(r**2) * float(expected) * p.m / 2))


def corrupt_quorum_bound(p: QuorumParams, K: int = 1) -> float:
    if K < 1:
        raise ParamsError('K must be at least 1')

    mu = float(p.mu)

    return _clamp(K * math.exp(-(mu**2) * float(p.p_f) * p.m / (2 + mu)))


def _derived_bounds(p: QuorumParams, asynchronous: bool, notes: List[str]) -> DerivedBounds | None:
    try:
        k2p = k2_prime(p)
    except ParamsError as err:
        notes.append(str(err))
        return None

    try:
        eps = nonintersection_failure_bound(p)
    except ParamsError as err:
        notes.append(str(err))
        eps = None

    try:
        delta = intersection_failure_bound(p, asynchronous=asynchronous)
    except ParamsError as err:
        notes.append(str(err))
        delta = None

    return DerivedBounds(
        validation_slack=validation_slack(p),
        k2_prime=k2p,
        spend_fraction=Fraction(1, k2p),
        eps_bound=eps,
        delta_bound=delta,
    )


def check_feasible_async(p: QuorumParams) -> FeasibilityReport:
    """Report the asynchronous feasibility conditions with the derived bounds

    Returns:
        FeasibilityReport: Pass/fail per condition. Never raises for infeasible parameters.
    """

    conditions = {
        'n > 8f': p.n > 8 * p.f,
        'k1*m/n < 1/24': p.alpha1 < ASYNC_MAX_ACCESS_RATIO,
        'n = (k1+k2)*m': p.n == (p.k1 + p.k2) * p.m,
    }
    notes: List[str] = []
    bounds = _derived_bounds(p, asynchronous=True, notes=notes)

    if not p.is_canonical:
        notes.append('outside proven regime')

    return FeasibilityReport(
        params=p, conditions=conditions, bounds=bounds, outside_proven_regime=not p.is_canonical, notes=notes
    )


def check_feasible_sync(p: QuorumParams) -> FeasibilityReport:
    conditions = {
        'alpha1 + p_f < alpha': p.alpha1 + p.p_f < p.alpha,
        'n = (k1+k2)*m': p.n == (p.k1 + p.k2) * p.m,
    }
    notes: List[str] = []
    bounds = _derived_bounds(p, asynchronous=False, notes=notes)

    if not p.is_canonical:
        notes.append('outside proven regime')

    return FeasibilityReport(
        params=p, conditions=conditions, bounds=bounds, outside_proven_regime=not p.is_canonical, notes=notes
    )


__all__ = [
    'QuorumParams',
    'DerivedBounds',
    'FeasibilityReport',
    'validation_slack',
    'k2_prime',
    'spend_fraction',
    'payment_amount',
    'reply_threshold',
    'witness_threshold',
    'exclusion_size',
    'settle_threshold',
    'buyer_settle_threshold',
    'nonintersection_failure_bound',
    'intersection_failure_bound',
    'corrupt_quorum_bound',
    'check_feasible_async',
    'check_feasible_sync',
]
