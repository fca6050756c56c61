import os
import re
import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple
from ..montecarlo import TrialConfig
from ..params import QuorumParams, FeasibilityReport, check_feasible_async, k2_prime
from ..simnet import build_strategy
from ..utils import setup_logger, get_metadata_from_yaml, validate_schema, ConfigError, ParamsError
from ..constants import DEFAULT_HORIZON, DEFAULT_LATENCY, DEFAULT_STEP_CAP

logger = setup_logger('Scenario Config')

SCENARIOS_DIR = os.path.join(os.path.dirname(__file__), 'scenarios')
VALIDATOR_NAME = re.compile(r'^v\d+$')

WORKLOAD_ACTIONS = {
    'pay': ('fund', 'seller'),
    'settle_buyer': ('fund',),
    'settle_seller': (),
    'propagate': ('message',),
}


@dataclass(frozen=True)
class FundSpec:
    FUND_SCHEMA = {'id': str, 'owner': str, 'balance': int}

    id: str
    owner: str
    balance: int


@dataclass(frozen=True)
class WorkloadItem:
    WORKLOAD_SCHEMA = {
        'at': int,
        'party': str,
        'action': str,
        'fund': str,  # Required by pay and settle_buyer.
        'seller': str,  # Required by pay.
        'message': str,  # Required by propagate.
    }

    at: int
    party: str
    action: str
    fund: str | None = None
    seller: str | None = None
    message: str | None = None


@dataclass(frozen=True)
class AdversarySpec:
    ADVERSARY_SCHEMA = {
        'strategy': str,  # Optional. Default is 'passive'.
        'corrupt_at_start': List[str],  # Optional. Default is [].
        'options': Dict[str, Any],  # Optional. Default is {}.
    }

    strategy: str = 'passive'
    corrupt_at_start: Tuple[str, ...] = ()
    options: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioConfig:
    """A runnable scenario: parameters, parties, initial funds, workload script and adversary."""

    SCENARIO_CONFIG_SCHEMA = {
        'name': str,
        'description': str,  # Optional. Default is ''.
        'seed': int,  # Optional. Default is 0.
        'step_cap': int,  # Optional. Default is 2000000.
        'horizon': int,  # Optional. Default is 100.
        'latency': List[int],  # Optional. Default is [1, 10].
        'allow_infeasible': bool,  # Optional. Default is False.
        'params': Dict[str, Any],
        'buyers': List[str],  # Optional. Default is [].
        'sellers': List[str],  # Optional. Default is [].
        'auto_settle': List[str],  # Optional. Default is [].
        'funds': List[Dict[str, Any]],  # Optional. Default is [].
        'workload': List[Dict[str, Any]],  # Optional. Default is [].
        'adversary': Dict[str, Any],  # Optional. Default is a passive adversary.
    }

    name: str
    params: QuorumParams
    description: str = ''
    seed: int = 0
    step_cap: int = DEFAULT_STEP_CAP
    horizon: int = DEFAULT_HORIZON
    latency: Tuple[int, int] = DEFAULT_LATENCY
    allow_infeasible: bool = False
    buyers: Tuple[str, ...] = ()
    sellers: Tuple[str, ...] = ()
    auto_settle: Tuple[str, ...] = ()
    funds: Tuple[FundSpec, ...] = ()
    workload: Tuple[WorkloadItem, ...] = ()
    adversary: AdversarySpec = field(default_factory=AdversarySpec)
    feasibility: FeasibilityReport | None = field(default=None, compare=False)

    def replace(self, **changes: Any) -> 'ScenarioConfig':
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, config: Dict[str, Any], source: str = '<config>') -> 'ScenarioConfig':
        """Validate a scenario mapping and resolve every reference

        Args:
            config (Dict[str, Any]): Mapping with the keys of `SCENARIO_CONFIG_SCHEMA`.
            source (str, optional): Name used in the messages. Defaults to '<config>'.

        Raises:
            ConfigError: With one diagnostic per problem, as `field path: message`.

        Returns:
            ScenarioConfig: The resolved scenario.
        """

        is_valid, err_msgs = validate_schema(config, cls.SCENARIO_CONFIG_SCHEMA, required=('name', 'params'))
        if not is_valid:
            cls.__fail(source, err_msgs)

        params = QuorumParams.from_dict(config['params'])

        funds, fund_errs = cls.__parse_items(config.get('funds', []), FundSpec, FundSpec.FUND_SCHEMA, 'funds')
        workload, workload_errs = cls.__parse_items(
            config.get('workload', []),
            WorkloadItem,
            WorkloadItem.WORKLOAD_SCHEMA,
            'workload',
            required=('at', 'party', 'action'),
        )
        adversary_config = config.get('adversary', {})
        is_valid, adversary_errs = validate_schema(adversary_config, AdversarySpec.ADVERSARY_SCHEMA, 'adversary.', ())
        err_msgs = fund_errs + workload_errs + adversary_errs
        if err_msgs:
            cls.__fail(source, err_msgs)

        adversary = AdversarySpec(
            strategy=adversary_config.get('strategy', 'passive'),
            corrupt_at_start=tuple(adversary_config.get('corrupt_at_start', [])),
            options=dict(adversary_config.get('options', {})),
        )
        latency = config.get('latency', list(DEFAULT_LATENCY))

        scenario = cls(
            name=config['name'],
            params=params,
            description=config.get('description', ''),
            seed=config.get('seed', 0),
            step_cap=config.get('step_cap', DEFAULT_STEP_CAP),
            horizon=config.get('horizon', DEFAULT_HORIZON),
            latency=tuple(latency),
            allow_infeasible=config.get('allow_infeasible', False),
            buyers=tuple(config.get('buyers', [])),
            sellers=tuple(config.get('sellers', [])),
            auto_settle=tuple(config.get('auto_settle', [])),
            funds=tuple(funds),
            workload=tuple(workload),
            adversary=adversary,
        )

        err_msgs = scenario.__is_scenario_valid()
        if err_msgs:
            cls.__fail(source, err_msgs)

        feasibility = check_feasible_async(params)
        if not feasibility.passed:
            failed = [name for name, ok in feasibility.conditions.items() if not ok]
            if not scenario.allow_infeasible:
                cls.__fail(source, [f'params: infeasible ({", ".join(failed)}); set allow_infeasible to override'])
            logger.warning(f'[from_dict] {scenario.name}: feasibility override, failing {failed}')

        return dataclasses.replace(scenario, feasibility=feasibility)

    @staticmethod
    def __fail(source: str, err_msgs: List[str]) -> None:
        for err_msg in err_msgs:
            logger.critical(f'[from_dict] {source}: {err_msg}')

        raise ConfigError(f'Invalid scenario config {source}.', err_msgs)

    @staticmethod
    def __parse_items(
        items: List[Dict[str, Any]], cls: type, schema: Dict[str, type], path: str, required: Tuple[str, ...] | None = None
    ) -> Tuple[List[Any], List[str]]:
        parsed, err_msgs = [], []
        for index, item in enumerate(items):
            is_valid, item_errs = validate_schema(item, schema, f'{path}[{index}].', required)
            if is_valid:
                parsed.append(cls(**item))
            err_msgs.extend(item_errs)

        return parsed, err_msgs

    def __is_scenario_valid(self) -> List[str]:
        p = self.params
        err_msgs = []
        validators = {f'v{i}' for i in range(p.n)}
        clients = list(self.buyers) + list(self.sellers)

        try:
            k2_prime(p)
        except ParamsError as err:
            err_msgs.append(f'params: {err}')

        if len(self.latency) != 2 or not 1 <= self.latency[0] <= self.latency[1]:
            err_msgs.append('latency: expected [lo, hi] with 1 <= lo <= hi.')
        if self.horizon < 1:
            err_msgs.append('horizon: must be positive.')
        if self.step_cap < 1:
            err_msgs.append('step_cap: must be positive.')

        for name in clients:
            if VALIDATOR_NAME.match(name):
                err_msgs.append(f'{name}: client names must not look like validator ids.')
        if len(set(clients)) != len(clients):
            err_msgs.append('buyers, sellers: names must be distinct.')

        for name in self.auto_settle:
            if name not in self.sellers:
                err_msgs.append(f'auto_settle: unknown seller {name}.')

        fund_ids = set()
        for index, fund in enumerate(self.funds):
            if fund.id in fund_ids:
                err_msgs.append(f'funds[{index}].id: duplicate fund {fund.id}.')
            fund_ids.add(fund.id)
            if fund.owner not in self.buyers:
                err_msgs.append(f'funds[{index}].owner: unknown buyer {fund.owner}.')
            if fund.balance < 0:
                err_msgs.append(f'funds[{index}].balance: must be non-negative.')
        owned = {fund.id: fund.owner for fund in self.funds}

        for index, item in enumerate(self.workload):
            path = f'workload[{index}]'
            if item.action not in WORKLOAD_ACTIONS:
                err_msgs.append(f'{path}.action: expected one of {sorted(WORKLOAD_ACTIONS)}.')
                continue
            for key in WORKLOAD_ACTIONS[item.action]:
                if getattr(item, key) == None:
                    err_msgs.append(f'{path}.{key}: missing key.')
            if item.at < 0:
                err_msgs.append(f'{path}.at: must be non-negative.')

            if item.action in ('pay', 'settle_buyer'):
                if item.party not in self.buyers:
                    err_msgs.append(f'{path}.party: unknown buyer {item.party}.')
                if item.fund != None and owned.get(item.fund) != item.party:
                    err_msgs.append(f'{path}.fund: {item.fund} is not a fund of {item.party}.')
            if item.action == 'pay' and item.seller != None and item.seller not in self.sellers:
                err_msgs.append(f'{path}.seller: unknown seller {item.seller}.')
            if item.action == 'settle_seller' and item.party not in self.sellers:
                err_msgs.append(f'{path}.party: unknown seller {item.party}.')
            if item.action == 'propagate' and item.party not in validators and item.party not in self.sellers:
                err_msgs.append(f'{path}.party: {item.party} is neither a seller nor a validator.')

        for name in self.adversary.corrupt_at_start:
            if name not in validators and name not in clients:
                err_msgs.append(f'adversary.corrupt_at_start: unknown party {name}.')
        if len([name for name in self.adversary.corrupt_at_start if name in validators]) > p.f:
            err_msgs.append(f'adversary.corrupt_at_start: more than f={p.f} validators.')

        try:
            build_strategy(self.adversary.strategy, self.adversary.options)
        except ConfigError as err:
            err_msgs.extend(err.diagnostics or [str(err)])

        return err_msgs


def bundled_scenarios() -> List[str]:
    return sorted(name[: -len('.yaml')] for name in os.listdir(SCENARIOS_DIR) if name.endswith('.yaml'))


def scenario_path(name_or_path: str) -> str:
    if os.path.isfile(name_or_path):
        return name_or_path

    bundled = os.path.join(SCENARIOS_DIR, f'{name_or_path}.yaml')
    if os.path.isfile(bundled):
        return bundled

    raise ConfigError(f'Unknown scenario {name_or_path}.', [f'expected a file or one of {bundled_scenarios()}'])


def load_scenario(name_or_path: str) -> ScenarioConfig:
    path = scenario_path(name_or_path)

    return ScenarioConfig.from_dict(get_metadata_from_yaml(path), source=path)


def load_params(file_path: str) -> QuorumParams:
    """Read parameters from a YAML file holding either the parameter mapping or a `params` table."""

    data = get_metadata_from_yaml(file_path)
    if isinstance(data, dict) and 'params' in data:
        data = data['params']

    return QuorumParams.from_dict(data)


def load_trial_configs(file_path: str) -> List[TrialConfig]:
    return TrialConfig.from_dict(get_metadata_from_yaml(file_path))


__all__ = [
    'FundSpec',
    'WorkloadItem',
    'AdversarySpec',
    'ScenarioConfig',
    'WORKLOAD_ACTIONS',
    'bundled_scenarios',
    'scenario_path',
    'load_scenario',
    'load_params',
    'load_trial_configs',
]
