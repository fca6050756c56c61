from .config import (
    FundSpec,
    WorkloadItem,
    AdversarySpec,
    ScenarioConfig,
    WORKLOAD_ACTIONS,
    bundled_scenarios,
    scenario_path,
    load_scenario,
    load_params,
    load_trial_configs,
)
from .requirements import (
    PASS,
    FAIL,
    INCONCLUSIVE,
    REQUIREMENT_TITLES,
    Verdict,
    RequirementReport,
    TraceFacts,
    check_requirements,
)

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
    'PASS',
    'FAIL',
    'INCONCLUSIVE',
    'REQUIREMENT_TITLES',
    'Verdict',
    'RequirementReport',
    'TraceFacts',
    'check_requirements',
]
