from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Set, Tuple
from ..ledger import buyer_settled_fund_id, seller_settled_fund_id
from ..simnet import Trace
from ..utils import setup_logger
from ..constants import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS

logger = setup_logger('Requirements')

PASS = 'PASS'
FAIL = 'FAIL'
INCONCLUSIVE = 'INCONCLUSIVE'

REQUIREMENT_TITLES = {
    '1': 'honest seller settlement completes',
    '2': 'settled payment equals the spend fraction',
    '3': 'at most k2\' partial spends and no value created',
    '4': 'settled payments deducted from buyer settlement',
    '5': 'honest-seller payments deducted from buyer settlement',
    '6': 'honest buyer keeps its unspent balance',
    '7': 'honest payments are certified',
    '8': 'honest buyer settlement completes',
    'UNIQUENESS': 'one certified content per fund id',
    'KNOWLEDGE': 'every adversary value has a derivation',
    'PROPAGATE-DELIVERY': 'n-2f honest validators hold a propagated message before it completes',
    'PROPAGATE-SECRECY': 'no propagated message known before its reconstruction starts',
}
PROGRESS_REQUIREMENTS = ('1', '7', '8')

FundKey = Tuple[str, int, Tuple[str, ...]]


@dataclass
class Verdict:
    requirement: str
    status: str
    witnesses: List[int] = field(default_factory=list)
    details: List[str] = field(default_factory=list)

    @property
    def title(self) -> str:
        return REQUIREMENT_TITLES[self.requirement]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'requirement': self.requirement,
            'title': self.title,
            'status': self.status,
            'witnesses': self.witnesses,
            'details': self.details,
        }


@dataclass
class RequirementReport:
    scenario: str
    seed: int
    status: str | None
    digest: str
    verdicts: List[Verdict]

    def __getitem__(self, requirement: str) -> Verdict:
        return next(verdict for verdict in self.verdicts if verdict.requirement == requirement)

    @property
    def passed(self) -> bool:
        return all(verdict.status == PASS for verdict in self.verdicts)

    @property
    def exit_code(self) -> int:
        statuses = {verdict.status for verdict in self.verdicts}
        if FAIL in statuses:
            return EXIT_FAIL
        if INCONCLUSIVE in statuses:
            return EXIT_INCONCLUSIVE

        return EXIT_PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            'scenario': self.scenario,
            'seed': self.seed,
            'status': self.status,
            'digest': self.digest,
            'exit_code': self.exit_code,
            'verdicts': [verdict.to_dict() for verdict in self.verdicts],
        }

    def table(self) -> str:
        lines = [f'{self.scenario} seed={self.seed} {self.status} digest={self.digest[:16]}']
        for verdict in self.verdicts:
            witnesses = f' @ {verdict.witnesses[:8]}' if verdict.witnesses else ''
            lines.append(f'  [{verdict.status:<12}] {verdict.requirement:<18} {verdict.title}{witnesses}')
            for detail in verdict.details[:5]:
                lines.append(f'      {detail}')

        return '\n'.join(lines)


class TraceFacts:
    """Indexes of one trace shared by every check.

    A fund is certified once the distinct valid signers seen for one `(fid, fbl, owners)` content, pooled over
    every fund-signing message, reach f+1. Initial funds are certified by construction.
    """

    def __init__(self, trace: Trace) -> None:
        setup = trace.setup
        params = setup['params']

        self.trace = trace
        self.n: int = params['n']
        self.f: int = params['f']
        self.k1: int = params['k1']
        self.k2_prime: int = setup['k2_prime']
        self.validators: Set[str] = set(setup['validators'])
        self.status = trace.status
        self.complete = self.status == 'COMPLETE'

        self.corrupted_at: Dict[str, int] = {}
        for record in trace.of_type('ADVERSARY'):
            if record['action'] == 'corrupt' and record['accepted']:
                self.corrupted_at.setdefault(record['target'], record['idx'])

        self.certified: Dict[FundKey, int] = {}
        signers: Dict[FundKey, Set[str]] = {}
        for record in trace.of_type('SEND'):
            fund = record.get('fund')
            if not fund:
                continue

            key = (fund['fid'], fund['fbl'], tuple(fund['owners']))
            pooled = signers.setdefault(key, set())
            pooled.update(fund['signers'])
            if len(pooled) > self.f and key not in self.certified:
                self.certified[key] = record['idx']

        self.certificates = list(trace.outcomes('CERTIFICATE'))
        self.by_settled_fid: Dict[str, Dict[str, Any]] = {
            seller_settled_fund_id(bytes.fromhex(record['payment'])).hex(): record for record in self.certificates
        }

        self.parents: Dict[str, int] = {fund['fid']: fund['balance'] for fund in setup['funds']}
        self.buyer_settled: Dict[str, List[FundKey]] = {}
        self.seller_settled: Dict[str, List[FundKey]] = {}
        self.untraced: List[FundKey] = []
        self._trace_certified()

    def _trace_certified(self) -> None:
        pending = list(self.certified)
        while pending:
            progressed = []
            for key in pending:
                fid, fbl, _ = key
                certificate = self.by_settled_fid.get(fid)
                if certificate != None and certificate['fund'] in self.parents:
                    self.seller_settled.setdefault(certificate['fund'], []).append(key)
                    progressed.append(key)
                    continue

                parent = next((p for p in self.parents if buyer_settled_fund_id(bytes.fromhex(p)).hex() == fid), None)
                if parent != None:
                    self.buyer_settled.setdefault(parent, []).append(key)
                    self.parents.setdefault(fid, fbl)
                    progressed.append(key)

            if not progressed:
                break
            pending = [key for key in pending if key not in progressed]

        self.untraced = pending

    def amount(self, parent: str) -> int:
        return self.parents[parent] // self.k2_prime

    def is_honest(self, party: str) -> bool:
        return party not in self.corrupted_at

    def honest_at(self, party: str, idx: int) -> bool:
        return self.corrupted_at.get(party, idx + 1) > idx

    def honest_certificates(self, parent: str) -> List[Dict[str, Any]]:
        return [record for record in self.certificates if record['fund'] == parent and self.is_honest(record['party'])]


def _progress(requirement: str, facts: TraceFacts, missing: List[Dict[str, Any]], describe) -> Verdict:
    if not missing:
        return Verdict(requirement, PASS)

    status = FAIL if facts.complete else INCONCLUSIVE

    return Verdict(
        requirement,
        status,
        witnesses=[record['idx'] for record in missing],
        details=[describe(record) for record in missing],
    )


def check_seller_settlement_progress(facts: TraceFacts) -> Verdict:
    settled = {(record['party'], record['payment']) for record in facts.trace.outcomes('SELLER_SETTLED')}
    missing = [
        record
        for record in facts.trace.outcomes('SELLER_SETTLE_STARTED')
        if facts.is_honest(record['party']) and (record['party'], record['payment']) not in settled
    ]

    return _progress('1', facts, missing, lambda r: f'{r["party"]} never settled payment {r["payment"][:16]}')


def check_settled_amount(facts: TraceFacts) -> Verdict:
    verdict = Verdict('2', PASS)
    for parent, keys in facts.seller_settled.items():
        amount = facts.amount(parent)
        for key in keys:
            if key[1] != amount:
                verdict.status = FAIL
                verdict.witnesses.append(facts.certified[key])
                verdict.details.append(f'settled fund {key[0][:16]} certified with {key[1]}, expected {amount}')

    return verdict


def check_spend_cap(facts: TraceFacts) -> Verdict:
    verdict = Verdict('3', PASS)

    for parent, balance in facts.parents.items():
        payments = {record['payment']: record for record in facts.certificates if record['fund'] == parent}
        if len(payments) > facts.k2_prime:
            verdict.status = FAIL
            verdict.witnesses.extend(record['idx'] for record in payments.values())
            verdict.details.append(f'{len(payments)} certificates on fund {parent[:16]}, cap {facts.k2_prime}')

        derived = facts.seller_settled.get(parent, []) + facts.buyer_settled.get(parent, [])
        total = sum(key[1] for key in derived)
        if total > balance:
            verdict.status = FAIL
            verdict.witnesses.extend(facts.certified[key] for key in derived)
            verdict.details.append(f'certified value {total} derived from fund {parent[:16]} exceeds {balance}')

    for key in facts.untraced:
        verdict.status = FAIL
        verdict.witnesses.append(facts.certified[key])
        verdict.details.append(f'certified fund {key[0][:16]} of {key[1]} has no known origin')

    return verdict


def check_settled_deducted(facts: TraceFacts) -> Verdict:
    verdict = Verdict('4', PASS)
    for parent, keys in facts.buyer_settled.items():
        ceiling = facts.parents[parent] - facts.amount(parent) * len(facts.seller_settled.get(parent, []))
        for key in keys:
            if key[1] > ceiling:
                verdict.status = FAIL
                verdict.witnesses.append(facts.certified[key])
                verdict.details.append(f'buyer settled {key[1]} from {parent[:16]}, at most {ceiling} allowed')

    return verdict


def _fold_entries(facts: TraceFacts, parent: str) -> Dict[str, List[int]]:
    """Folded snapshot indexes per h_s for one fund."""

    entries: Dict[str, List[int]] = {}
    for record in facts.trace.of_type('SNAPSHOT'):
        if record['kind'] != 'SETTLEMENT_FOLD' or record['fund'] != parent:
            continue
        for entry in record['transactions']:
            entries.setdefault(entry.split(':')[1], []).append(record['idx'])

    return entries


def check_honest_payments_deducted(facts: TraceFacts) -> Verdict:
    verdict = Verdict('5', PASS)
    for parent, keys in facts.buyer_settled.items():
        honest = facts.honest_certificates(parent)
        ceiling = facts.parents[parent] - facts.amount(parent) * len(honest)
        folds = _fold_entries(facts, parent)

        for certificate in honest:
            seen = folds.get(certificate['h_s'], [])
            verdict.details.append(
                f'payment {certificate["h_s"][:16]} to {certificate["party"]} in transactions at {seen[:4]}'
            )
            verdict.witnesses.extend(seen[:1])

        for key in keys:
            if key[1] > ceiling:
                verdict.status = FAIL
                verdict.witnesses.append(facts.certified[key])
                verdict.witnesses.extend(certificate['idx'] for certificate in honest)
                verdict.details.append(f'buyer settled {key[1]} from {parent[:16]}, at most {ceiling} allowed')

    return verdict


def check_honest_owner_balance(facts: TraceFacts) -> Verdict:
    verdict = Verdict('6', PASS)
    for parent, keys in facts.buyer_settled.items():
        for key in keys:
            owners = key[2]
            if not owners or not all(facts.is_honest(owner) for owner in owners):
                continue

            started = sum(
                1
                for record in facts.trace.outcomes('PAY_STARTED')
                if record['fund'] == parent and record['party'] in owners
            )
            floor = facts.parents[parent] - facts.amount(parent) * started
            if key[1] < floor:
                verdict.status = FAIL
                verdict.witnesses.append(facts.certified[key])
                verdict.details.append(f'buyer settled {key[1]} from {parent[:16]}, at least {floor} expected')

    return verdict


def check_honest_payments_certified(facts: TraceFacts) -> Verdict:
    certified = {(r['fund'], r['buyer'], r['party']): r['idx'] for r in facts.certificates}
    failed = {(r['fund'], r['buyer'], r['party']): r['idx'] for r in facts.trace.outcomes('PAYMENT_FAILED')}
    settles = {(r['fund'], r['party']): r['idx'] for r in facts.trace.outcomes('BUYER_SETTLE_STARTED')}

    missing = []
    for record in facts.trace.outcomes('PAY_STARTED'):
        buyer, seller = record['party'], record['seller']
        if not facts.is_honest(buyer) or not facts.is_honest(seller):
            continue

        key = (record['fund'], buyer, seller)
        resolved = certified.get(key)
        if resolved != None:
            continue

        settle = settles.get((record['fund'], buyer))
        if settle != None and settle > record['idx'] and settle < failed.get(key, len(facts.trace)):
            continue

        missing.append(record)

    verdict = _progress(
        '7', facts, missing, lambda r: f'payment from {r["party"]} to {r["seller"]} on {r["fund"][:16]} not certified'
    )
    if any((r['fund'], r['party'], r['seller']) in failed for r in missing):
        verdict.status = FAIL

    return verdict


def check_buyer_settlement_progress(facts: TraceFacts) -> Verdict:
    settled = {(record['party'], record['fund']) for record in facts.trace.outcomes('BUYER_SETTLED')}
    missing = [
        record
        for record in facts.trace.outcomes('BUYER_SETTLE_STARTED')
        if facts.is_honest(record['party']) and (record['party'], record['fund']) not in settled
    ]

    return _progress('8', facts, missing, lambda r: f'{r["party"]} never settled fund {r["fund"][:16]}')


def check_uniqueness(facts: TraceFacts) -> Verdict:
    verdict = Verdict('UNIQUENESS', PASS)
    contents: Dict[str, List[FundKey]] = {}
    for key in facts.certified:
        contents.setdefault(key[0], []).append(key)

    for fid, keys in contents.items():
        if len(keys) > 1:
            verdict.status = FAIL
            verdict.witnesses.extend(facts.certified[key] for key in keys)
            verdict.details.append(f'fund {fid[:16]} certified with balances {sorted(key[1] for key in keys)}')

    return verdict


def check_knowledge(facts: TraceFacts) -> Verdict:
    verdict = Verdict('KNOWLEDGE', PASS)
    sends = {record['seq']: record for record in facts.trace.of_type('SEND')}
    known: Set[str] = set()

    def reject(record: Dict[str, Any], reason: str) -> None:
        verdict.status = FAIL
        verdict.witnesses.append(record['idx'])
        verdict.details.append(f'{record["label"]}: {reason}')

    for record in facts.trace.of_type('KNOWLEDGE'):
        idx = record['idx']
        unknown = [parent for parent in record['parents'] if parent not in known]
        if unknown:
            reject(record, f'derived from unknown {unknown}')

        source = record['source']
        if source == 'payload':
            send = sends.get(record['seq'])
            if send == None or (facts.honest_at(send['sender'], idx) and facts.honest_at(send['receiver'], idx)):
                reject(record, 'read from honest traffic')
        elif source == 'memory':
            if not any(at < idx for at in facts.corrupted_at.values()):
                reject(record, 'memory read without a corruption')
            if record['label'].startswith('key:') and facts.honest_at(record['label'][4:], idx):
                reject(record, 'key of an honest party')
        elif source == 'derived':
            if not record['parents']:
                reject(record, 'derivation without parents')
        else:
            reject(record, f'unknown source {source}')

        known.add(record['label'])

    return verdict


def check_propagate_delivery(facts: TraceFacts) -> Verdict:
    verdict = Verdict('PROPAGATE-DELIVERY', PASS)
    received: Dict[Tuple[str, str, str], List[Dict[str, Any]]] = {}
    for record in facts.trace.outcomes('PROPAGATE_RECEIVED'):
        received.setdefault((record['client'], record['nonce'], record['digest']), []).append(record)

    needed = facts.n - 2 * facts.f
    for done in facts.trace.outcomes('PROPAGATE_DONE'):
        client = done['party']
        if not facts.honest_at(client, done['idx']):
            continue

        holders = {
            record['party']
            for record in received.get((client, done['nonce'], done['digest']), [])
            if record['idx'] < done['idx'] and facts.honest_at(record['party'], record['idx'])
        }
        if len(holders) < needed:
            verdict.status = FAIL
            verdict.witnesses.append(done['idx'])
            verdict.details.append(f'{client} finished {done["nonce"][:16]} with {len(holders)} holders, need {needed}')

    return verdict


def check_propagate_secrecy(facts: TraceFacts) -> Verdict:
    verdict = Verdict('PROPAGATE-SECRECY', PASS)
    first_reconstruct: Dict[str, int] = {}
    for record in facts.trace.of_type('DELIVER'):
        if record['kind'] == 'RECONSTRUCT':
            first_reconstruct.setdefault(record['context'], record['idx'])

    for record in facts.trace.of_type('KNOWLEDGE'):
        if not record['label'].startswith('message:'):
            continue

        _, client, nonce = record['label'].split(':')
        if not facts.honest_at(client, record['idx']):
            continue

        started = first_reconstruct.get(f'prop:{client}:{nonce}')
        if started == None or record['idx'] < started:
            verdict.status = FAIL
            verdict.witnesses.append(record['idx'])
            verdict.details.append(f'message of {client} known before its reconstruction')

    return verdict


CHECKS = (
    check_seller_settlement_progress,
    check_settled_amount,
    check_spend_cap,
    check_settled_deducted,
    check_honest_payments_deducted,
    check_honest_owner_balance,
    check_honest_payments_certified,
    check_buyer_settlement_progress,
    check_uniqueness,
    check_knowledge,
    check_propagate_delivery,
    check_propagate_secrecy,
)


def check_requirements(trace: Trace, checks: Iterable = CHECKS) -> RequirementReport:
    """Evaluate every requirement as a predicate over a finished trace

    Args:
        trace (Trace): Trace starting with SETUP. A trace closed by TIMEOUT (or not closed) reports unmet
            progress requirements as INCONCLUSIVE; safety is evaluated in any case.
        checks (Iterable, optional): Check functions to run. Defaults to CHECKS.

    Returns:
        RequirementReport: One verdict per check, failures carrying trace indexes as witnesses.
    """

    facts = TraceFacts(trace)
    verdicts = [check(facts) for check in checks]

    report = RequirementReport(
        scenario=trace.setup['scenario'],
        seed=trace.setup['seed'],
        status=facts.status,
        digest=trace.digest(),
        verdicts=verdicts,
    )
    for verdict in verdicts:
        if verdict.status == FAIL:
            logger.warning(f'[check_requirements] {report.scenario} seed={report.seed}: {verdict.requirement} FAIL')

    return report


__all__ = [
    'PASS',
    'FAIL',
    'INCONCLUSIVE',
    'REQUIREMENT_TITLES',
    'PROGRESS_REQUIREMENTS',
    'Verdict',
    'RequirementReport',
    'TraceFacts',
    'CHECKS',
    'check_requirements',
]
