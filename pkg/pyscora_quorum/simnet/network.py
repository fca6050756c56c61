import heapq
import numpy as np
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Deque, Dict, Iterable, List, Set, Tuple, TYPE_CHECKING
from .adversary import (
    AdversaryAction,
    AdversaryStrategy,
    AdversaryView,
    Corrupt,
    Delay,
    Deliver,
    Drive,
    Inject,
    Knowledge,
    KnowledgeItem,
    Metadata,
)
from .strategies import PassiveStrategy, build_strategy
from .trace import Trace
from ..crypto import KeyPair, KeyRegistry, hash_bytes
from ..ledger import Fund, encode, genesis_fund, valid_validators
from ..messages import FUND_SIGNING_KINDS, Message, MessageKind
from ..params import QuorumParams, k2_prime
from ..protocol import Buyer, Party, Seller, Validator, party_of
from ..utils import setup_logger, get_data_decoded, ProtocolError, QuorumError
from ..constants import DEFAULT_HORIZON, DEFAULT_LATENCY, DEFAULT_STEP_CAP

if TYPE_CHECKING:
    from ..harness.config import ScenarioConfig

logger = setup_logger('Sim Network')

WorkloadCallback = Callable[[Party, 'NetworkContext'], Any]


@dataclass
class PendingMessage:
    seq: int
    message: Message
    sent_at: int
    deliver_at: int
    size: int
    held: bool = False


class NetworkContext:
    def __init__(self, network: 'SimNetwork', party: str) -> None:
        self._network = network
        self.party = party
        self.rng = network.rng
        self.registry = network.registry

    @property
    def now(self) -> int:
        return self._network.now

    def send(
        self, receiver: str, kind: MessageKind, body: Tuple[Any, ...], context: str | None = None
    ) -> None:
        self._network.send(Message(kind=kind, sender=self.party, receiver=receiver, body=tuple(body), context=context))

    def record(self, event: str, **detail: Any) -> None:
        self._network.trace.append('OUTCOME', time=self._network.now, party=self.party, event=event, **detail)

    def snapshot(self, kind: str, **detail: Any) -> None:
        self._network.trace.append(
            'SNAPSHOT',
            time=self._network.now,
            party=self.party,
            kind=kind,
            corrupted=self._network.corrupted_validators(),
            **detail,
        )


class SimNetwork:
    """Discrete-event asynchronous network driven by a seeded scheduler and an adaptive adversary.

    Events are ordered by (virtual time, sequence number). The adversary may delay honest traffic up
    to `horizon` ticks after it was sent, and without limit when it touches a corrupted party or
    belongs to a context the adversary knows.
    """

    def __init__(
        self,
        params: QuorumParams,
        seed: int,
        horizon: int = DEFAULT_HORIZON,
        latency: Tuple[int, int] = DEFAULT_LATENCY,
        step_cap: int = DEFAULT_STEP_CAP,
        strategy: AdversaryStrategy | None = None,
    ) -> None:
        self.params = params
        self.seed = seed
        self.horizon = horizon
        self.latency = latency
        self.step_cap = step_cap

        protocol_seq, latency_seq, adversary_seq, key_seq = np.random.SeedSequence(seed).spawn(4)
        self.rng = np.random.default_rng(protocol_seq)
        self._latency_rng = np.random.default_rng(latency_seq)
        self.registry = KeyRegistry(np.random.default_rng(key_seq))

        self.validators = [f'v{i}' for i in range(params.n)]
        self.validator_set = frozenset(self.validators)
        self.keys: Dict[str, KeyPair] = {}
        self.parties: Dict[str, Party] = {}
        self.funds: List[Dict[str, Any]] = []
        self.corrupted: Set[str] = set()

        self.trace = Trace()
        self.now = 0
        self.steps = 0
        self.knowledge = Knowledge(params, self.validators, clock=lambda: self.now, on_learn=self._on_learn)
        self.strategy = strategy or PassiveStrategy()
        self.view = AdversaryView(self, np.random.default_rng(adversary_seq))

        self._queue: List[Tuple[int, int]] = []
        self._pending: Dict[int, PendingMessage] = {}
        self._timers: Dict[int, Tuple[str, str, WorkloadCallback]] = {}
        self._observed: Set[int] = set()
        self._contexts: Dict[str, NetworkContext] = {}
        self._actions: Deque[AdversaryAction] = deque()
        self._reacting = False
        self._seq = 0

        for validator in self.validators:
            key = self._new_key(validator)
            self.parties[validator] = Validator(key, params, self.validators, self.registry)

    def _new_key(self, party: str) -> KeyPair:
        key = self.registry.generate(party)
        self.keys[party] = key

        return key

    def _next_seq(self) -> int:
        self._seq += 1

        return self._seq

    def context(self, party: str) -> NetworkContext:
        if party not in self._contexts:
            self._contexts[party] = NetworkContext(self, party)

        return self._contexts[party]

    def corrupted_validators(self) -> List[str]:
        return sorted(party for party in self.corrupted if party in self.validator_set)

    def genesis(self, label: str, owner: str, balance: int) -> Fund:
        """Fully certified initial fund, signed by validators 0..f."""

        signers = [self.keys[v] for v in self.validators[: self.params.f + 1]]
        fund = genesis_fund(label, owner.encode('utf-8'), balance, signers)
        self.funds.append(
            {'label': label, 'fid': fund.fid.hex(), 'owner': owner, 'balance': balance, 'amount': balance // k2_prime(self.params)}
        )

        return fund

    def add_buyer(self, name: str, funds: Iterable[Fund] = (), labels: Dict[str, bytes] | None = None) -> Buyer:
        buyer = Buyer(self._new_key(name), self.params, self.validators, funds=funds, labels=labels)
        self.parties[name] = buyer

        return buyer

    def add_seller(self, name: str, auto_settle: bool = False) -> Seller:
        seller = Seller(self._new_key(name), self.params, self.validators, auto_settle=auto_settle)
        self.parties[name] = seller

        return seller

    def schedule(self, at: int, party: str, action: str, callback: WorkloadCallback) -> None:
        seq = self._next_seq()
        self._timers[seq] = (party, action, callback)
        heapq.heappush(self._queue, (at, seq))

    def send(self, msg: Message) -> int:
        seq = self._next_seq()
        lo, hi = self.latency
        deliver_at = self.now + int(self._latency_rng.integers(lo, hi + 1))
        encoded = encode(list(msg.body))

        self._pending[seq] = PendingMessage(
            seq=seq, message=msg, sent_at=self.now, deliver_at=deliver_at, size=len(encoded)
        )
        heapq.heappush(self._queue, (deliver_at, seq))

        record = {
            'time': self.now,
            'seq': seq,
            'kind': msg.kind.value,
            'sender': msg.sender,
            'receiver': msg.receiver,
            'context': msg.context,
            'size': len(encoded),
            'digest': hash_bytes(encoded, 16).hex(),
        }
        if msg.kind in FUND_SIGNING_KINDS:
            record['fund'] = self._fund_detail(msg)
        self.trace.append('SEND', **record)

        if msg.sender in self.corrupted or msg.receiver in self.corrupted:
            self._observe(msg, seq)

        self._react(
            self.strategy.on_metadata(
                self.view, Metadata('send', seq, self.now, msg.sender, msg.receiver, len(encoded))
            )
        )

        return seq

    def _fund_detail(self, msg: Message) -> Dict[str, Any] | None:
        try:
            fund = msg.body[0]
            signers = sorted(party_of(pk) for pk in valid_validators(fund, self.registry))

            return {
                'fid': fund.fid.hex(),
                'fbl': fund.fbl,
                'owners': sorted(party_of(owner) for owner in fund.owners),
                'signers': signers,
                'origin': 'seller' if msg.kind == MessageKind.SETTLE_VALID else 'buyer',
            }
        except (QuorumError, AttributeError, TypeError, IndexError, UnicodeDecodeError):
            return None

    def _observe(self, msg: Message, seq: int) -> None:
        if seq in self._observed:
            return

        self._observed.add(seq)
        self.knowledge.observe(msg, seq)
        self._react(self.strategy.on_payload(self.view, msg, seq))

    def _on_learn(self, item: KnowledgeItem) -> None:
        self.trace.append(
            'KNOWLEDGE',
            time=self.now,
            label=item.label,
            source=item.derivation.source,
            seq=item.derivation.seq,
            parents=list(item.derivation.parents),
        )

    def _deliver(self, pending: PendingMessage) -> None:
        msg = pending.message
        del self._pending[pending.seq]

        self.trace.append(
            'DELIVER',
            time=self.now,
            seq=pending.seq,
            kind=msg.kind.value,
            sender=msg.sender,
            receiver=msg.receiver,
            context=msg.context,
        )

        if msg.sender in self.corrupted or msg.receiver in self.corrupted:
            self._observe(msg, pending.seq)

        party = self.parties.get(msg.receiver)
        silenced = msg.receiver in self.corrupted and msg.receiver in self.validator_set
        if party != None and not silenced:
            party.handle(self.context(msg.receiver), msg)
            if msg.receiver in self.corrupted:
                self.knowledge.absorb(msg.receiver, party.secrets())

        self._react(
            self.strategy.on_metadata(
                self.view, Metadata('deliver', pending.seq, self.now, msg.sender, msg.receiver, pending.size)
            )
        )

    def _run_timer(self, party_id: str, action: str, callback: WorkloadCallback) -> None:
        party = self.parties[party_id]

        if party_id in self.corrupted and party_id in self.validator_set:
            self.context(party_id).record('WORKLOAD_REJECTED', action=action, reason='party silenced')
            return

        try:
            callback(party, self.context(party_id))
        except ProtocolError as err:
            self.context(party_id).record('WORKLOAD_REJECTED', action=action, reason=str(err))
            logger.warning(f'[run] {party_id} rejected {action}: {err}')

        if party_id in self.corrupted:
            self.knowledge.absorb(party_id, party.secrets())

    def _adversary(self, action: str, accepted: bool, reason: str | None = None, **detail: Any) -> None:
        self.trace.append('ADVERSARY', time=self.now, action=action, accepted=accepted, reason=reason, **detail)
        if not accepted:
            logger.warning(f'[adversary] rejected {action} {detail}: {reason}')

    def _react(self, actions: Iterable[AdversaryAction]) -> None:
        self._actions.extend(actions)
        if self._reacting:
            return

        self._reacting = True
        try:
            while self._actions:
                self._apply(self._actions.popleft())
        finally:
            self._reacting = False

    def _apply(self, action: AdversaryAction) -> None:
        if isinstance(action, Corrupt):
            self.corrupt(action.party)
        elif isinstance(action, Delay):
            self.delay(action.seq, action.until)
        elif isinstance(action, Deliver):
            self.release(action.seq)
        elif isinstance(action, Inject):
            self.inject(action)
        elif isinstance(action, Drive):
            self.drive(action)
        else:
            self._adversary('unknown', False, reason=f'unsupported action {type(action).__name__}')

    def corrupt(self, party: str) -> bool:
        reason = None
        if party not in self.parties:
            reason = 'unknown party'
        elif party in self.corrupted:
            reason = 'already corrupted'
        elif party in self.validator_set and len(self.corrupted_validators()) >= self.params.f:
            reason = 'budget exhausted'

        if reason:
            self._adversary('corrupt', False, reason, target=party)
            return False

        self.corrupted.add(party)
        self.parties[party].on_corrupted()
        self._adversary('corrupt', True, target=party)
        logger.info(f'[corrupt] {party} corrupted at t={self.now}')
        self.knowledge.absorb(party, self.parties[party].secrets())

        return True

    def _unbounded(self, msg: Message) -> bool:
        return (
            msg.sender in self.corrupted
            or msg.receiver in self.corrupted
            or (msg.context != None and msg.context in self.knowledge)
        )

    def delay(self, seq: int, until: int | None) -> bool:
        pending = self._pending.get(seq)
        if pending == None:
            self._adversary('delay', False, 'not pending', seq=seq, until=until)
            return False

        unbounded = self._unbounded(pending.message)
        if until == None:
            if not unbounded:
                self._adversary('delay', False, 'honest traffic cannot be held', seq=seq, until=until)
                return False
            pending.held = True
        else:
            if not unbounded and until > pending.sent_at + self.horizon:
                self._adversary('delay', False, 'beyond horizon', seq=seq, until=until)
                return False
            pending.held = False
            pending.deliver_at = max(until, self.now)
            heapq.heappush(self._queue, (pending.deliver_at, seq))

        self._adversary('delay', True, seq=seq, until=until)

        return True

    def release(self, seq: int) -> bool:
        pending = self._pending.get(seq)
        if pending == None:
            self._adversary('deliver', False, 'not pending', seq=seq)
            return False

        pending.held = False
        pending.deliver_at = self.now
        heapq.heappush(self._queue, (self.now, seq))
        self._adversary('deliver', True, seq=seq)

        return True

    def inject(self, action: Inject) -> bool:
        if action.sender not in self.corrupted:
            self._adversary('inject', False, 'sender not corrupted', sender=action.sender, receiver=action.receiver)
            return False
        if action.receiver not in self.parties:
            self._adversary('inject', False, 'unknown receiver', sender=action.sender, receiver=action.receiver)
            return False

        body = action.body(self.keys[action.sender]) if callable(action.body) else action.body
        self._adversary('inject', True, sender=action.sender, receiver=action.receiver, kind=action.kind.value)
        self.send(
            Message(kind=action.kind, sender=action.sender, receiver=action.receiver, body=tuple(body), context=action.context)
        )

        return True

    def drive(self, action: Drive) -> bool:
        party = self.parties.get(action.party)
        method = getattr(party, action.method, None) if not action.method.startswith('_') else None

        if action.party not in self.corrupted or action.party in self.validator_set or not callable(method):
            self._adversary('drive', False, 'not a corrupted client operation', target=action.party, method=action.method)
            return False

        self._adversary('drive', True, target=action.party, method=action.method)
        try:
            method(self.context(action.party), *action.args)
        except QuorumError as err:
            logger.warning(f'[adversary] {action.party}.{action.method} failed: {err}')
        self.knowledge.absorb(action.party, party.secrets())

        return True

    def run(self, scenario: str = 'adhoc', corrupt_at_start: Iterable[str] = ()) -> Trace:
        """Execute until quiescence or the step cap

        Args:
            scenario (str, optional): Name stored in the SETUP record. Defaults to 'adhoc'.
            corrupt_at_start (Iterable[str], optional): Parties corrupted before the first event. Defaults to ().

        Returns:
            Trace: The full trace, closed by an END record with status COMPLETE or TIMEOUT.
        """

        p = self.params
        self.trace.append(
            'SETUP',
            time=self.now,
            scenario=scenario,
            seed=self.seed,
            params=get_data_decoded(p.to_dict()),
            k2_prime=k2_prime(p),
            horizon=self.horizon,
            latency=list(self.latency),
            step_cap=self.step_cap,
            strategy=self.strategy.name,
            validators=list(self.validators),
            buyers=sorted(name for name, party in self.parties.items() if isinstance(party, Buyer)),
            sellers=sorted(name for name, party in self.parties.items() if isinstance(party, Seller)),
            funds=list(self.funds),
        )

        self._react([Corrupt(party) for party in corrupt_at_start])
        self._react(self.strategy.on_start(self.view))

        status = 'COMPLETE'
        while self._queue:
            time, seq = heapq.heappop(self._queue)
            timer = self._timers.pop(seq, None)
            pending = None
            if timer == None:
                pending = self._pending.get(seq)
                if pending == None or pending.held or pending.deliver_at != time:
                    continue

            if self.steps >= self.step_cap:
                status = 'TIMEOUT'
                break

            self.steps += 1
            if time > self.now:
                self.now = time
                self._react(self.strategy.on_timer(self.view))

            if timer != None:
                self._run_timer(*timer)
            else:
                self._deliver(pending)

        self.trace.append('END', time=self.now, status=status, steps=self.steps, undelivered=len(self._pending))
        logger.info(f'[run] {scenario} seed={self.seed}: {status} after {self.steps} steps at t={self.now}')

        return self.trace


def _workload_callback(item: Any) -> WorkloadCallback:
    if item.action == 'pay':
        return lambda party, ctx: party.pay(ctx, item.fund, item.seller)
    if item.action == 'settle_buyer':
        return lambda party, ctx: party.settle(ctx, item.fund)
    if item.action == 'settle_seller':
        return lambda party, ctx: party.settle_all(ctx)
    if item.action == 'propagate':
        return lambda party, ctx: party.propagate(ctx, item.message.encode('utf-8'))

    raise ProtocolError(f'Unknown workload action {item.action}.')


def build_network(config: 'ScenarioConfig', seed: int | None = None) -> SimNetwork:
    seed = config.seed if seed == None else seed
    network = SimNetwork(
        config.params,
        seed,
        horizon=config.horizon,
        latency=tuple(config.latency),
        step_cap=config.step_cap,
        strategy=build_strategy(config.adversary.strategy, config.adversary.options),
    )

    owned: Dict[str, List[Tuple[str, Fund]]] = {}
    for item in config.funds:
        owned.setdefault(item.owner, []).append((item.id, network.genesis(item.id, item.owner, item.balance)))

    for name in config.buyers:
        funds = owned.get(name, [])
        network.add_buyer(name, funds=[fund for _, fund in funds], labels={label: fund.fid for label, fund in funds})

    for name in config.sellers:
        network.add_seller(name, auto_settle=name in config.auto_settle)

    for item in config.workload:
        network.schedule(item.at, item.party, item.action, _workload_callback(item))

    return network


def run_scenario(config: 'ScenarioConfig', seed: int | None = None) -> Trace:
    network = build_network(config, seed)

    return network.run(scenario=config.name, corrupt_at_start=config.adversary.corrupt_at_start)
