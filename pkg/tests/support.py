"""In-process delivery helpers shared by the protocol-level tests."""

from collections import deque
from typing import Any, Callable, Deque, Dict, List, Sequence, Tuple

import numpy as np

from pyscora_quorum.crypto import KeyPair, KeyRegistry
from pyscora_quorum.ledger import Fund, genesis_fund
from pyscora_quorum.messages import Message, MessageKind
from pyscora_quorum.params import QuorumParams
from pyscora_quorum.protocol import Buyer, Party, Seller, Validator


class RecordingContext:
    """PartyContext that queues sends on a shared outbox and keeps every outcome."""

    def __init__(self, party: str, rng: np.random.Generator, registry: KeyRegistry, outbox: Deque[Message]) -> None:
        self.party = party
        self.rng = rng
        self.registry = registry
        self.outbox = outbox
        self.records: List[Dict[str, Any]] = []
        self.snapshots: List[Dict[str, Any]] = []
        self.now = 0

    def send(self, receiver: str, kind: MessageKind, body: Tuple[Any, ...], context: str | None = None) -> None:
        self.outbox.append(Message(kind=kind, sender=self.party, receiver=receiver, body=tuple(body), context=context))

    def record(self, event: str, **detail: Any) -> None:
        self.records.append({'event': event, **detail})

    def snapshot(self, kind: str, **detail: Any) -> None:
        self.snapshots.append({'kind': kind, **detail})

    def events(self, name: str) -> List[Dict[str, Any]]:
        return [record for record in self.records if record['event'] == name]


class LocalNetwork:
    """In-order delivery between in-process parties, no adversary. `drop` filters messages out."""

    def __init__(self, params: QuorumParams, seed: int = 0) -> None:
        self.params = params
        self.rng = np.random.default_rng(seed)
        self.registry = KeyRegistry(np.random.default_rng(seed + 1))
        self.validators = [f'v{i}' for i in range(params.n)]
        self.keys: Dict[str, KeyPair] = {}
        self.parties: Dict[str, Party] = {}
        self.contexts: Dict[str, RecordingContext] = {}
        self.outbox: Deque[Message] = deque()
        self.delivered: List[Message] = []
        self.drop: Callable[[Message], bool] = lambda msg: False

        for name in self.validators:
            self.add(Validator(self.key(name), params, self.validators, self.registry))

    def key(self, name: str) -> KeyPair:
        self.keys[name] = self.registry.generate(name)

        return self.keys[name]

    def add(self, party: Party) -> Party:
        self.parties[party.party_id] = party
        self.contexts[party.party_id] = RecordingContext(party.party_id, self.rng, self.registry, self.outbox)

        return party

    def ctx(self, name: str) -> RecordingContext:
        return self.contexts[name]

    def genesis(self, label: str, owner: str, balance: int, signers: Sequence[str] | None = None) -> Fund:
        signers = self.validators[: self.params.f + 1] if signers == None else signers

        return genesis_fund(label, owner.encode('utf-8'), balance, [self.keys[name] for name in signers])

    def buyer(self, name: str, funds: Sequence[Fund] = ()) -> Buyer:
        return self.add(Buyer(self.key(name), self.params, self.validators, funds=funds))

    def seller(self, name: str, auto_settle: bool = False) -> Seller:
        return self.add(Seller(self.key(name), self.params, self.validators, auto_settle=auto_settle))

    def run(self, limit: int = 2_000_000) -> int:
        steps = 0
        while self.outbox and steps < limit:
            msg = self.outbox.popleft()
            steps += 1
            if self.drop(msg):
                continue

            self.delivered.append(msg)
            party = self.parties.get(msg.receiver)
            if party != None:
                party.handle(self.contexts[msg.receiver], msg)

        return steps

    def events(self, name: str) -> List[Dict[str, Any]]:
        return [record for ctx in self.contexts.values() for record in ctx.events(name)]

