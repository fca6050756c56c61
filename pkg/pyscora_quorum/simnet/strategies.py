from dataclasses import dataclass, field
from typing import Any, Dict, List, Type
from .adversary import (
    AdversaryAction,
    AdversaryStrategy,
    AdversaryView,
    Corrupt,
    Delay,
    Deliver,
    Drive,
    Inject,
    Metadata,
)
from ..crypto import KeyPair, sign
from ..ledger import Fund, validate_fund, witness_payload
from ..messages import Message, MessageKind, quorum_context
from ..params import witness_threshold
from ..utils import ConfigError


def _forged_valid(validator: str, seller: str, tid, h_s: bytes) -> Inject:
    """VALID reply produced by a corrupted validator for a payment it was asked to validate."""

    return Inject(
        sender=validator,
        receiver=seller,
        kind=MessageKind.VALID,
        body=lambda key: (tid, h_s, sign(key, witness_payload(tid, h_s))),
        context=quorum_context(h_s),
    )


class PassiveStrategy(AdversaryStrategy):
    name = 'passive'


class RandomDelayStrategy(AdversaryStrategy):
    """Delays a random share of all traffic by up to the horizon."""

    name = 'random-delay'
    OPTIONS_SCHEMA = {'probability': float}
    DEFAULT_OPTIONS = {'probability': 0.5}

    def on_metadata(self, view: AdversaryView, meta: Metadata) -> List[AdversaryAction]:
        if meta.phase != 'send' or view.rng.random() >= self.options['probability']:
            return []

        return [Delay(seq=meta.seq, until=meta.time + int(view.rng.integers(1, view.horizon + 1)))]


class SilentValidatorsStrategy(AdversaryStrategy):
    name = 'silent-validators'
    OPTIONS_SCHEMA = {'count': int}

    def on_start(self, view: AdversaryView) -> List[AdversaryAction]:
        count = min(self.options.get('count', view.params.f), view.budget_left())
        honest = [v for v in view.validators if not view.is_corrupted(v)]
        picked = view.rng.choice(len(honest), size=count, replace=False) if count > 0 else []

        return [Corrupt(honest[int(i)]) for i in sorted(picked)]


@dataclass
class _QuorumTrack:
    seller: str
    tid: Any
    h_s: bytes
    members: List[str] = field(default_factory=list)
    replies: Dict[str, str] = field(default_factory=dict)
    held: Dict[str, int] = field(default_factory=dict)
    decided: bool = False


class GreedyFlipStrategy(AdversaryStrategy):
    """Pushes payments of corrupted sellers through by corrupting refusing quorum members.

    Refusals addressed to a corrupted seller are held back. Once every member answered, the strategy
    corrupts just enough refusers to reach the witness threshold if its budget allows, and releases
    the refusals otherwise.
    """

    name = 'greedy-flip'

    def __init__(self, options: Dict[str, Any] | None = None) -> None:
        super().__init__(options)
        self.tracks: Dict[bytes, _QuorumTrack] = {}

    def on_payload(self, view: AdversaryView, msg: Message, seq: int) -> List[AdversaryAction]:
        actions: List[AdversaryAction] = []

        if msg.kind == MessageKind.VALIDATE and view.is_corrupted(msg.sender):
            tid, h_s = msg.body[0], msg.body[1]
            track = self.tracks.setdefault(h_s, _QuorumTrack(seller=msg.sender, tid=tid, h_s=h_s))
            if msg.receiver not in track.members:
                track.members.append(msg.receiver)
            if view.is_corrupted(msg.receiver) and msg.receiver not in track.replies:
                track.replies[msg.receiver] = 'VALID'
                actions.append(_forged_valid(msg.receiver, msg.sender, tid, h_s))

        elif msg.kind in (MessageKind.VALID, MessageKind.INVALID) and view.is_corrupted(msg.receiver):
            track = self.tracks.get(msg.body[1])
            if track == None or track.decided or msg.sender in track.replies:
                return []
            if msg.kind == MessageKind.INVALID and not view.is_corrupted(msg.sender):
                track.replies[msg.sender] = 'INVALID'
                track.held[msg.sender] = seq
                actions.append(Delay(seq=seq, until=None))
            else:
                track.replies[msg.sender] = 'VALID'

        else:
            return []

        for track in list(self.tracks.values()):
            if not track.decided and track.members and len(track.replies) >= view.params.m:
                actions.extend(self._decide(view, track))

        return actions

    def _decide(self, view: AdversaryView, track: _QuorumTrack) -> List[AdversaryAction]:
        track.decided = True
        approvals = sum(1 for status in track.replies.values() if status == 'VALID')
        needed = witness_threshold(view.params) - approvals
        refusers = sorted(track.held)

        flipped = refusers[:needed] if 0 < needed <= min(len(refusers), view.budget_left()) else []

        actions: List[AdversaryAction] = []
        for validator in flipped:
            actions.append(Corrupt(validator))
            actions.append(_forged_valid(validator, track.seller, track.tid, track.h_s))
        for validator in refusers:
            if validator not in flipped:
                actions.append(Deliver(track.held[validator]))

        return actions


class SellerFlipStrategy(AdversaryStrategy):
    """A corrupted seller settles its payments twice while corrupted validators sign an inflated fund."""

    name = 'seller-flip'
    OPTIONS_SCHEMA = {'inflate': int}
    DEFAULT_OPTIONS = {'inflate': 5}

    def __init__(self, options: Dict[str, Any] | None = None) -> None:
        super().__init__(options)
        self.flipped: set = set()

    def on_payload(self, view: AdversaryView, msg: Message, seq: int) -> List[AdversaryAction]:
        if msg.kind == MessageKind.VALIDATE and view.is_corrupted(msg.sender) and view.is_corrupted(msg.receiver):
            tid, h_s = msg.body[0], msg.body[1]
            return [_forged_valid(msg.receiver, msg.sender, tid, h_s)]

        if msg.kind != MessageKind.SETTLE_VALID or not view.is_corrupted(msg.receiver):
            return []
        if msg.receiver in self.flipped:
            return []

        self.flipped.add(msg.receiver)
        candidate, N_settle = msg.body
        inflated = Fund(fid=candidate.fid, fbl=candidate.fbl * self.options['inflate'], owners=candidate.owners)

        def body(key: KeyPair, fund: Fund = inflated, nonce: bytes = N_settle):
            return (fund.with_certificate([validate_fund(key, fund)]), nonce)

        actions: List[AdversaryAction] = [Drive(party=msg.receiver, method='settle_all')]
        for validator in view.validators:
            if view.is_corrupted(validator):
                actions.append(Inject(sender=validator, receiver=msg.receiver, kind=MessageKind.SETTLE_VALID, body=body))

        return actions


class EraseWitnessesStrategy(AdversaryStrategy):
    """Spends the whole budget on random validators as soon as a given party starts talking."""

    name = 'erase-witnesses'
    OPTIONS_SCHEMA = {'trigger': str, 'after': int, 'count': int}
    DEFAULT_OPTIONS = {'trigger': 'b0', 'after': 0}

    def __init__(self, options: Dict[str, Any] | None = None) -> None:
        super().__init__(options)
        self.fired = False

    def on_metadata(self, view: AdversaryView, meta: Metadata) -> List[AdversaryAction]:
        if self.fired or meta.phase != 'send' or meta.sender != self.options['trigger']:
            return []
        if meta.time < self.options['after']:
            return []

        self.fired = True
        count = min(self.options.get('count', view.params.f), view.budget_left())
        honest = [v for v in view.validators if not view.is_corrupted(v)]
        picked = view.rng.choice(len(honest), size=count, replace=False) if count > 0 else []

        return [Corrupt(honest[int(i)]) for i in sorted(picked)]


class PropagateRaceStrategy(AdversaryStrategy):
    """Corrupts a validator right after it received enough validator traffic to reconstruct."""

    name = 'propagate-race'
    OPTIONS_SCHEMA = {'target': str, 'threshold': int}

    def __init__(self, options: Dict[str, Any] | None = None) -> None:
        super().__init__(options)
        self.received = 0
        self.fired = False

    def _target(self, view: AdversaryView) -> str:
        if 'target' not in self.options:
            self.options['target'] = next(v for v in view.validators if not view.is_corrupted(v))

        return self.options['target']

    def on_metadata(self, view: AdversaryView, meta: Metadata) -> List[AdversaryAction]:
        if self.fired or meta.phase != 'deliver':
            return []

        validators = view.validators
        if meta.receiver != self._target(view) or meta.sender not in validators:
            return []

        self.received += 1
        if self.received < self.options.get('threshold', view.params.f + 1):
            return []

        self.fired = True

        return [Corrupt(meta.receiver)]


STRATEGIES: Dict[str, Type[AdversaryStrategy]] = {
    strategy.name: strategy
    for strategy in (
        PassiveStrategy,
        RandomDelayStrategy,
        SilentValidatorsStrategy,
        GreedyFlipStrategy,
        SellerFlipStrategy,
        EraseWitnessesStrategy,
        PropagateRaceStrategy,
    )
}


def build_strategy(name: str, options: Dict[str, Any] | None = None) -> AdversaryStrategy:
    if name not in STRATEGIES:
        raise ConfigError(f'Unknown adversary strategy {name}.', [f'adversary.strategy: expected one of {sorted(STRATEGIES)}'])

    return STRATEGIES[name](options)
