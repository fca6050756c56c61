from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Sequence, Set, Tuple
from ..crypto import KeyPair, KeyRegistry, Share, hash_bytes, new_nonce, reconstruct_secret, secret_share, sign
from ..ledger import share_binding_payload
from ..messages import Message, MessageKind, PartyContext, propagate_context

InstanceKey = Tuple[str, bytes]
ObtainedCallback = Callable[[PartyContext, str, bytes, bytes], None]
DoneCallback = Callable[[PartyContext, bytes, bytes], None]


class PropagatePhase(str, Enum):
    SHARING = 'SHARING'
    RECONSTRUCTING = 'RECONSTRUCTING'
    DONE = 'DONE'


@dataclass
class PropagateClientState:
    message: bytes
    N_prop: bytes
    acks: Set[str] = field(default_factory=set)
    reconstructed: Set[str] = field(default_factory=set)
    phase: PropagatePhase = PropagatePhase.SHARING


@dataclass
class PropagateServerState:
    share: Share | None = None
    shares: Dict[int, Share] = field(default_factory=dict)
    forwarded: Set[str] = field(default_factory=set)
    message: bytes | None = None
    announcements: Dict[str, bytes] = field(default_factory=dict)
    reconstruct_requested: bool = False
    share_forwarded: bool = False


class PropagateClient:
    """Client side of the share-then-reconstruct dissemination.

    SHARE to every validator, RECONSTRUCT once n-f acknowledged, done once n-f announced the reconstruction.
    """

    def __init__(self, key: KeyPair, validators: Sequence[str], f: int, on_done: DoneCallback | None = None) -> None:
        self.key = key
        self.validators = list(validators)
        self.f = f
        self.on_done = on_done
        self.instances: Dict[bytes, PropagateClientState] = {}
        self.terminated: Set[bytes] = set()

    @property
    def quorum(self) -> int:
        return len(self.validators) - self.f

    def start(self, ctx: PartyContext, message: bytes, N_prop: bytes | None = None) -> bytes:
        N_prop = N_prop if N_prop != None else new_nonce(ctx.rng)
        self.instances[N_prop] = PropagateClientState(message=message, N_prop=N_prop)

        share_set = secret_share(message, len(self.validators), self.f + 1, ctx.rng)
        context = propagate_context(self.key.party, N_prop)

        for index, validator in enumerate(self.validators, start=1):
            share = share_set[index]
            binding = sign(self.key, share_binding_payload(share.data, validator.encode('utf-8'), N_prop))
            ctx.send(validator, MessageKind.SHARE, (N_prop, share.index, share.data, binding), context=context)

        return N_prop

    def handle(self, ctx: PartyContext, msg: Message) -> bool:
        if msg.kind == MessageKind.SHARE_ACK:
            (N_prop,) = msg.body
            state = self.instances.get(N_prop)
            if state == None or msg.sender not in self.validators:
                return True

            state.acks.add(msg.sender)
            if state.phase == PropagatePhase.SHARING and len(state.acks) >= self.quorum:
                state.phase = PropagatePhase.RECONSTRUCTING
                context = propagate_context(self.key.party, N_prop)
                for validator in self.validators:
                    ctx.send(validator, MessageKind.RECONSTRUCT, (N_prop,), context=context)

            return True

        if msg.kind == MessageKind.RECONSTRUCTED:
            client, _, N_prop = msg.body
            state = self.instances.get(N_prop)
            if client == self.key.party and N_prop in self.terminated:
                return True
            if client != self.key.party or state == None or msg.sender not in self.validators:
                return False

            state.reconstructed.add(msg.sender)
            if state.phase != PropagatePhase.DONE and len(state.reconstructed) >= self.quorum:
                state.phase = PropagatePhase.DONE
                ctx.record('PROPAGATE_DONE', nonce=N_prop.hex(), digest=hash_bytes(state.message).hex())
                if self.on_done:
                    self.on_done(ctx, N_prop, state.message)
                del self.instances[N_prop]
                self.terminated.add(N_prop)

            return True

        return False

    def secrets(self) -> Iterator[Tuple[str, ...]]:
        for N_prop, state in self.instances.items():
            yield ('message', self.key.party, N_prop, state.message)


class PropagateServer:
    """Validator side: store, forward, reconstruct and announce. After n-f announcements only the id is kept."""

    def __init__(
        self,
        key: KeyPair,
        validators: Sequence[str],
        f: int,
        registry: KeyRegistry,
        on_obtained: ObtainedCallback | None = None,
    ) -> None:
        self.key = key
        self.validators = list(validators)
        self.indices = {validator: index for index, validator in enumerate(self.validators, start=1)}
        self.f = f
        self.registry = registry
        self.on_obtained = on_obtained
        self.instances: Dict[InstanceKey, PropagateServerState] = {}
        self.finished: Set[InstanceKey] = set()
        self.obtained: Dict[InstanceKey, bytes] = {}

    @property
    def quorum(self) -> int:
        return len(self.validators) - self.f

    def _state(self, key: InstanceKey) -> PropagateServerState | None:
        if key in self.finished:
            return None

        return self.instances.setdefault(key, PropagateServerState())

    def _forward(self, ctx: PartyContext, client: str, N_prop: bytes, state: PropagateServerState) -> None:
        state.share_forwarded = True
        share = state.share
        context = propagate_context(client, N_prop)

        for validator in self.validators:
            ctx.send(
                validator,
                MessageKind.FORWARD,
                (client, N_prop, share.index, share.data, share.binding),
                context=context,
            )

    def _obtain(self, ctx: PartyContext, client: str, N_prop: bytes, message: bytes, via: str) -> None:
        self.obtained[(client, N_prop)] = message
        ctx.record(
            'PROPAGATE_RECEIVED', client=client, nonce=N_prop.hex(), digest=hash_bytes(message).hex(), via=via
        )
        if self.on_obtained:
            self.on_obtained(ctx, client, N_prop, message)

    def _bound_to(self, client: str, holder: str, N_prop: bytes, data: bytes, binding: bytes) -> bool:
        payload = share_binding_payload(data, holder.encode('utf-8'), N_prop)

        return self.registry.verify(client.encode('utf-8'), payload, binding)

    def handle(self, ctx: PartyContext, msg: Message) -> bool:
        if msg.kind == MessageKind.SHARE:
            N_prop, index, data, binding = msg.body
            state = self._state((msg.sender, N_prop))
            if state == None or state.share != None:
                return True
            if index != self.indices[self.key.party] or not self._bound_to(
                msg.sender, self.key.party, N_prop, data, binding
            ):
                return True

            state.share = Share(index=index, data=data, binding=binding)
            ctx.send(msg.sender, MessageKind.SHARE_ACK, (N_prop,), context=propagate_context(msg.sender, N_prop))
            if state.reconstruct_requested and not state.share_forwarded:
                self._forward(ctx, msg.sender, N_prop, state)

            return True

        if msg.kind == MessageKind.RECONSTRUCT:
            (N_prop,) = msg.body
            state = self._state((msg.sender, N_prop))
            if state == None:
                return True

            state.reconstruct_requested = True
            if state.share != None and not state.share_forwarded:
                self._forward(ctx, msg.sender, N_prop, state)

            return True

        if msg.kind == MessageKind.FORWARD:
            client, N_prop, index, data, binding = msg.body
            if msg.sender not in self.indices or index != self.indices[msg.sender]:
                return True

            state = self._state((client, N_prop))
            if state == None or msg.sender in state.forwarded:
                return True
            if not self._bound_to(client, msg.sender, N_prop, data, binding):
                return True

            state.forwarded.add(msg.sender)
            state.shares[index] = Share(index=index, data=data, binding=binding)

            if state.message == None and len(state.shares) >= self.f + 1:
                state.message = reconstruct_secret(state.shares.values(), self.f + 1)
                self._obtain(ctx, client, N_prop, state.message, via='reconstruct')

                context = propagate_context(client, N_prop)
                receivers = self.validators if client in self.indices else [client] + self.validators
                for receiver in receivers:
                    ctx.send(receiver, MessageKind.RECONSTRUCTED, (client, state.message, N_prop), context=context)

            return True

        if msg.kind == MessageKind.RECONSTRUCTED:
            client, message, N_prop = msg.body
            if msg.sender not in self.indices:
                return True

            key = (client, N_prop)
            state = self._state(key)
            if state == None:
                return True

            state.announcements.setdefault(msg.sender, message)
            if len(state.announcements) >= self.quorum:
                if state.message == None:
                    adopted = self._agreed(state.announcements.values())
                    if adopted != None:
                        state.message = adopted
                        self._obtain(ctx, client, N_prop, adopted, via='adopt')

                del self.instances[key]
                self.obtained.pop(key, None)
                self.finished.add(key)

            return True

        return False

    def _agreed(self, announced: Iterator[bytes]) -> bytes | None:
        counts: Dict[bytes, int] = {}
        for message in announced:
            counts[message] = counts.get(message, 0) + 1

        for message, count in sorted(counts.items(), key=lambda item: (-item[1], item[0])):
            if count >= self.f + 1:
                return message

        return None

    def secrets(self) -> Iterator[Tuple[Any, ...]]:
        for (client, N_prop), state in self.instances.items():
            if state.share != None:
                yield ('share', client, N_prop, state.share)
            for share in state.shares.values():
                yield ('share', client, N_prop, share)
        for (client, N_prop), message in self.obtained.items():
            yield ('message', client, N_prop, message)


def handle_propagate(
    ctx: PartyContext, msg: Message, client: PropagateClient | None, server: PropagateServer | None
) -> bool:
    """Route a propagate message to the roles a party plays. RECONSTRUCTED may concern both."""

    handled = False
    if client != None:
        handled = client.handle(ctx, msg) or handled
    if server != None:
        handled = server.handle(ctx, msg) or handled

    return handled


__all__ = [
    'PropagatePhase',
    'PropagateClientState',
    'PropagateServerState',
    'PropagateClient',
    'PropagateServer',
    'handle_propagate',
]
