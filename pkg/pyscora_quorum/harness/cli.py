import os
import sys
import json
import argparse
from typing import Any, Dict, List, Sequence
from .config import ScenarioConfig, bundled_scenarios, load_params, load_scenario
from .requirements import RequirementReport, check_requirements
from ..montecarlo import TrialConfig, estimate_flip_budget, grind_quorums, run_point, write_reports
from ..params import (
    QuorumParams,
    check_feasible_async,
    check_feasible_sync,
    exclusion_size,
    reply_threshold,
    witness_threshold,
    corrupt_quorum_bound,
    settle_threshold,
    buyer_settle_threshold,
)
from ..simnet import Trace, run_scenario
from ..utils import (
    setup_logger,
    set_log_level,
    measure_time,
    get_data_decoded,
    get_metadata_from_yaml,
    ConfigError,
    QuorumError,
)
from ..constants import DEFAULT_FLIP_RUNS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS

logger = setup_logger('Quorum CLI')

EXIT_CONFIG = 1


def _worst(codes: Sequence[int]) -> int:
    if EXIT_FAIL in codes:
        return EXIT_FAIL
    if EXIT_INCONCLUSIVE in codes:
        return EXIT_INCONCLUSIVE

    return EXIT_PASS


def _seeds(first: int, count: int) -> List[int]:
    return [first + offset for offset in range(max(1, count))]


def _trace_path(out: str, seed: int, many: bool) -> str:
    if not many:
        return out

    root, ext = os.path.splitext(out)

    return f'{root}-{seed}{ext or ".jsonl"}'


def _print_reports(reports: List[RequirementReport], fmt: str) -> None:
    if fmt == 'json':
        print(json.dumps([report.to_dict() for report in reports], indent=2))
        return

    for report in reports:
        print(report.table())


@measure_time
def cmd_run(args: argparse.Namespace) -> int:
    config: ScenarioConfig = load_scenario(args.scenario)
    if args.step_cap != None:
        config = config.replace(step_cap=args.step_cap)
    if args.horizon != None:
        config = config.replace(horizon=args.horizon)

    seeds = _seeds(config.seed if args.seed == None else args.seed, args.seeds)
    reports = []
    for seed in seeds:
        trace = run_scenario(config, seed)
        if args.out:
            trace.write(_trace_path(args.out, seed, len(seeds) > 1))
        reports.append(check_requirements(trace))

    _print_reports(reports, args.format)
    passed = sum(1 for report in reports if report.exit_code == EXIT_PASS)
    logger.info(f'[run] {config.name}: {passed}/{len(reports)} seeds passed every requirement')

    return _worst([report.exit_code for report in reports])


@measure_time
def cmd_check(args: argparse.Namespace) -> int:
    report = check_requirements(Trace.load(args.trace))
    _print_reports([report], args.format)

    return report.exit_code


def _bounds_summary(p: QuorumParams) -> Dict[str, Any]:
    async_report = check_feasible_async(p)
    sync_report = check_feasible_sync(p)

    return get_data_decoded(
        {
            'params': p.to_dict(),
            'thresholds': {
                'reply': reply_threshold(p),
                'witness': witness_threshold(p),
                'exclusion': exclusion_size(p),
                'settle': settle_threshold(p),
                'buyer_settle': buyer_settle_threshold(p),
            },
            'corrupt_quorum_bound': corrupt_quorum_bound(p),
            'async': async_report.to_dict(),
            'sync': sync_report.to_dict(),
        }
    )


def _format_bounds(summary: Dict[str, Any]) -> str:
    lines = [' '.join(f'{key}={value}' for key, value in summary['params'].items())]
    lines.extend(f'  {name:<22} {value}' for name, value in summary['thresholds'].items())
    lines.append(f'  {"corrupt_quorum_bound":<22} {summary["corrupt_quorum_bound"]:.6g}')

    for mode in ('async', 'sync'):
        report = summary[mode]
        lines.append(f'{mode}: {"FEASIBLE" if report["passed"] else "INFEASIBLE"}')
        for condition, ok in report['conditions'].items():
            lines.append(f'  [{"PASS" if ok else "FAIL"}] {condition}')
        for name, value in (report['bounds'] or {}).items():
            lines.append(f'  {name:<22} {value}')
        for note in report['notes']:
            lines.append(f'  note: {note}')

    return '\n'.join(lines)


@measure_time
def cmd_bounds(args: argparse.Namespace) -> int:
    if os.path.isfile(args.params):
        params = load_params(args.params)
    else:
        params = load_scenario(args.params).params

    summary = _bounds_summary(params)
    if args.format == 'json':
        print(json.dumps(summary, indent=2, sort_keys=True))
    else:
        print(_format_bounds(summary))

    return EXIT_PASS


@measure_time
def cmd_montecarlo(args: argparse.Namespace) -> int:
    raw = get_metadata_from_yaml(args.config)
    points = TrialConfig.from_dict(raw)
    flip_runs = raw.get('flip_runs', DEFAULT_FLIP_RUNS) if args.flip_runs == None else args.flip_runs
    grind_tries = raw.get('grind_tries') if args.grind_tries == None else args.grind_tries
    overrides: Dict[str, Any] = {}
    if args.trials != None:
        overrides['trials'] = args.trials

    rows: List[Dict[str, Any]] = []
    verdicts: List[str] = []
    for point in points:
        point = point.replace(**overrides) if overrides else point
        for seed in _seeds(point.seed if args.seed == None else args.seed, args.seeds):
            cfg: TrialConfig = point.replace(seed=seed)
            for report in run_point(cfg):
                rows.append(report.to_row())
                verdicts.append(report.verdict)

            if flip_runs > 0:
                flip = estimate_flip_budget(cfg, runs=flip_runs)
                rows.append(flip.to_dict())
                verdicts.append(flip.verdict)
            if grind_tries:
                grind = grind_quorums(cfg, runs=args.grind_runs, tries=grind_tries)
                rows.append(grind.to_dict())
                verdicts.append(grind.verdict)

    if args.out:
        write_reports(rows, args.out, args.format)
        logger.info(f'[montecarlo] wrote {len(rows)} rows to {args.out}')
    else:
        for row in rows:
            print(json.dumps(row, sort_keys=True) if args.format == 'json' else _format_row(row))

    return _worst([EXIT_FAIL if v == 'FAIL' else EXIT_INCONCLUSIVE if v == 'INCONCLUSIVE' else EXIT_PASS for v in verdicts])


def _format_row(row: Dict[str, Any]) -> str:
    if 'mode' in row:
        return (
            f'[{row["verdict"]:<12}] {row["kind"]:<16} {row["mode"]:<5} prior={row["prior_model"]} seed={row["seed"]} '
            f'rate={row["rate"]:.5f} ci=({row["ci_low"]:.5f}, {row["ci_high"]:.5f}) bound={row["bound"]}'
        )

    details = ' '.join(f'{key}={value}' for key, value in row.items() if key not in ('kind', 'verdict', 'params'))

    return f'[{row["verdict"]:<12}] {row["kind"]:<16} {details}'


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='pyscora-quorum',
        description='Simulate and check (k1,k2)-quorum partial-spending payments.',
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument('--log-level', default=None, help='Level for every package logger')
    subparsers = parser.add_subparsers(dest='command', required=True)

    run = subparsers.add_parser('run', help='Run a scenario and check its requirements')
    run.add_argument('scenario', help=f'Scenario file or bundled name ({", ".join(bundled_scenarios())})')
    run.add_argument('--seed', type=int, default=None, help='First seed; defaults to the scenario seed')
    run.add_argument('--seeds', type=int, default=1, help='Number of consecutive seeds')
    run.add_argument('--step-cap', type=int, default=None)
    run.add_argument('--horizon', type=int, default=None)
    run.add_argument('--out', default=None, help='Trace file; one file per seed when --seeds > 1')
    run.add_argument('--format', choices=('text', 'json'), default='text')
    run.set_defaults(handler=cmd_run)

    bounds = subparsers.add_parser('bounds', help='Feasibility and analytic bounds of a parameter set')
    bounds.add_argument('params', help='YAML parameter file, scenario file or bundled scenario name')
    bounds.add_argument('--format', choices=('text', 'json'), default='text')
    bounds.set_defaults(handler=cmd_bounds)

    montecarlo = subparsers.add_parser('montecarlo', help='Estimate quorum properties against the analytic bounds')
    montecarlo.add_argument('config', help='YAML trial file')
    montecarlo.add_argument('--seed', type=int, default=None)
    montecarlo.add_argument('--seeds', type=int, default=1)
    montecarlo.add_argument('--trials', type=int, default=None)
    montecarlo.add_argument('--flip-runs', type=int, default=None, help='Adaptive flip runs; 0 disables')
    montecarlo.add_argument('--grind-tries', type=int, default=None, help='Nonces tried per grinding run')
    montecarlo.add_argument('--grind-runs', type=int, default=None, help='Grinding runs; defaults to --trials')
    montecarlo.add_argument('--out', default=None)
    montecarlo.add_argument('--format', choices=('csv', 'json'), default='csv')
    montecarlo.set_defaults(handler=cmd_montecarlo)

    check = subparsers.add_parser('check', help='Re-check the requirements of a stored trace')
    check.add_argument('trace')
    check.add_argument('--format', choices=('text', 'json'), default='text')
    check.set_defaults(handler=cmd_check)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        set_log_level(args.log_level.upper())

    try:
        return args.handler(args)
    except ConfigError as err:
        logger.critical(f'[main] {err}')
        for diagnostic in err.diagnostics:
            print(f'error: {diagnostic}', file=sys.stderr)

        return EXIT_CONFIG
    except QuorumError as err:
        logger.critical(f'[main] {err}')

        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
