from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Sequence, Tuple, Type, TYPE_CHECKING
from ..crypto import KeyPair, Share, hash_bytes, reconstruct_secret, sign
from ..ledger import TransactionId, decode
from ..messages import Message, MessageKind
from ..params import QuorumParams
from ..selection import select_quorum
from ..utils import validate_schema, AdversaryError, ConfigError, QuorumError

if TYPE_CHECKING:
    from .network import SimNetwork

Body = Tuple[Any, ...] | Callable[[KeyPair], Tuple[Any, ...]]


@dataclass(frozen=True)
class Metadata:
    """What the adversary observes of every message: no kind, no payload."""

    phase: str
    seq: int
    time: int
    sender: str
    receiver: str
    size: int


@dataclass(frozen=True)
class Corrupt:
    party: str


@dataclass(frozen=True)
class Delay:
    seq: int
    until: int | None = None


@dataclass(frozen=True)
class Deliver:
    seq: int


@dataclass(frozen=True)
class Inject:
    """Message sent on behalf of a corrupted party; `body` may be built from the sender's key."""

    sender: str
    receiver: str
    kind: MessageKind
    body: Body
    context: str | None = None


@dataclass(frozen=True)
class Drive:
    """Invoke a public operation of a corrupted client's own code."""

    party: str
    method: str
    args: Tuple[Any, ...] = ()


AdversaryAction = Corrupt | Delay | Deliver | Inject | Drive


@dataclass(frozen=True)
class Derivation:
    source: str
    seq: int | None = None
    parents: Tuple[str, ...] = ()


@dataclass
class KnowledgeItem:
    label: str
    value: Any
    derivation: Derivation
    time: int


def key_label(party: str) -> str:
    return f'key:{party}'


def share_label(client: str, N_prop: bytes, index: int) -> str:
    return f'share:{client}:{N_prop.hex()}:{index}'


def message_label(client: str, N_prop: bytes) -> str:
    return f'message:{client}:{N_prop.hex()}'


def nonce_label(h_s: bytes) -> str:
    return f'nonce:{h_s.hex()}'


def quorum_label(h_s: bytes) -> str:
    return f'quorum:{h_s.hex()}'


class Knowledge:
    """Everything the adversary has learned, each item with the derivation that produced it.

    Values enter from visible payloads, from corrupted memory, or by derivation from known values:
    f+1 shares of one instance yield the message, a seller-settle message yields N_s and N_s yields
    the quorum. Hashes are never inverted.
    """

    def __init__(
        self,
        params: QuorumParams,
        validators: Sequence[str],
        clock: Callable[[], int],
        on_learn: Callable[[KnowledgeItem], None] | None = None,
    ) -> None:
        self.params = params
        self.validators = list(validators)
        self.clock = clock
        self.on_learn = on_learn
        self.items: Dict[str, KnowledgeItem] = {}
        self._shares: Dict[Tuple[str, bytes], Dict[int, Tuple[str, Share]]] = {}

    def __contains__(self, label: str) -> bool:
        return label in self.items

    def get(self, label: str) -> Any:
        item = self.items.get(label)

        return item.value if item else None

    def learn(self, label: str, value: Any, source: str, seq: int | None = None, parents: Iterable[str] = ()) -> bool:
        if label in self.items:
            return False

        item = KnowledgeItem(
            label=label,
            value=value,
            derivation=Derivation(source=source, seq=seq, parents=tuple(parents)),
            time=self.clock(),
        )
        self.items[label] = item
        if self.on_learn:
            self.on_learn(item)

        return True

    def learn_share(self, client: str, N_prop: bytes, share: Share, source: str, seq: int | None = None) -> None:
        label = share_label(client, N_prop, share.index)
        if not self.learn(label, share, source, seq):
            return

        known = self._shares.setdefault((client, N_prop), {})
        known[share.index] = (label, share)

        threshold = self.params.f + 1
        if len(known) >= threshold and message_label(client, N_prop) not in self.items:
            picked = [known[index] for index in sorted(known)[:threshold]]
            message = reconstruct_secret([share for _, share in picked], threshold)
            self.learn_message(client, N_prop, message, 'derived', parents=[label for label, _ in picked])

    def learn_message(
        self,
        client: str,
        N_prop: bytes,
        message: bytes,
        source: str,
        seq: int | None = None,
        parents: Iterable[str] = (),
    ) -> None:
        label = message_label(client, N_prop)
        if not self.learn(label, message, source, seq, parents):
            return

        try:
            decoded = decode(message)
            if decoded[0] == 'SELLER_SETTLE':
                tid = TransactionId.from_wire(decoded[1])
                self.learn_nonce(tid, decoded[2], 'derived', parents=[label])
        except (QuorumError, ValueError, TypeError, IndexError, AttributeError):
            pass

    def learn_nonce(
        self, tid: TransactionId, N_s: bytes, source: str, seq: int | None = None, parents: Iterable[str] = ()
    ) -> None:
        h_s = hash_bytes(N_s)
        label = nonce_label(h_s)
        self.learn(label, N_s, source, seq, parents)

        quorum = select_quorum(tid, N_s, self.params.n, self.params.m)
        members = sorted(self.validators[index] for index in quorum)
        self.learn(quorum_label(h_s), members, 'derived', parents=[label])

    def observe(self, msg: Message, seq: int) -> None:
        """Extract what a visible payload reveals."""

        try:
            if msg.kind == MessageKind.SHARE:
                N_prop, index, data, binding = msg.body
                self.learn_share(msg.sender, N_prop, Share(index, data, binding), 'payload', seq)
            elif msg.kind == MessageKind.FORWARD:
                client, N_prop, index, data, binding = msg.body
                self.learn_share(client, N_prop, Share(index, data, binding), 'payload', seq)
            elif msg.kind == MessageKind.RECONSTRUCTED:
                client, message, N_prop = msg.body
                self.learn_message(client, N_prop, message, 'payload', seq)
        except (QuorumError, ValueError, TypeError, AttributeError):
            pass

    def absorb(self, party: str, secrets: Iterable[Tuple[Any, ...]]) -> None:
        """Take in a corrupted party's memory."""

        self.learn(key_label(party), party.encode('utf-8'), 'memory', parents=())
        for item in secrets:
            kind = item[0]
            if kind == 'share':
                _, client, N_prop, share = item
                self.learn_share(client, N_prop, share, 'memory')
            elif kind == 'message':
                _, client, N_prop, message = item
                self.learn_message(client, N_prop, message, 'memory')
            elif kind == 'nonce':
                _, tid, N_s = item
                self.learn_nonce(tid, N_s, 'memory')


class AdversaryView:
    """The adversary's handle on the network: observation, corrupted keys and corrupted clients only."""

    def __init__(self, network: 'SimNetwork', rng) -> None:
        self.__network = network
        self.rng = rng

    @property
    def now(self) -> int:
        return self.__network.now

    @property
    def params(self) -> QuorumParams:
        return self.__network.params

    @property
    def horizon(self) -> int:
        return self.__network.horizon

    @property
    def validators(self) -> List[str]:
        return list(self.__network.validators)

    @property
    def knowledge(self) -> Knowledge:
        return self.__network.knowledge

    @property
    def corrupted(self) -> frozenset:
        return frozenset(self.__network.corrupted)

    def is_corrupted(self, party: str) -> bool:
        return party in self.__network.corrupted

    def budget_left(self) -> int:
        used = sum(1 for party in self.__network.corrupted if party in self.__network.validator_set)

        return self.params.f - used

    def key(self, party: str) -> KeyPair:
        if party not in self.__network.corrupted:
            raise AdversaryError(f'The adversary holds no key of honest party {party}.')

        return self.__network.keys[party]

    def sign(self, party: str, payload: bytes) -> bytes:
        return sign(self.key(party), payload)

    def puppet(self, party: str) -> Any:
        """Read-only access to a corrupted party's state."""

        if party not in self.__network.corrupted:
            raise AdversaryError(f'The adversary cannot read the state of honest party {party}.')

        return self.__network.parties[party]


class AdversaryStrategy:
    name = 'passive'
    OPTIONS_SCHEMA: Dict[str, Type] = {}
    DEFAULT_OPTIONS: Dict[str, Any] = {}

    def __init__(self, options: Dict[str, Any] | None = None) -> None:
        options = options or {}
        is_valid, err_msgs = validate_schema(options, self.OPTIONS_SCHEMA, path='adversary.options.', required=())
        if not is_valid:
            raise ConfigError(f'Invalid options for strategy {self.name}.', err_msgs)

        self.options = dict(self.DEFAULT_OPTIONS)
        self.options.update(**options)

    def on_start(self, view: AdversaryView) -> List[AdversaryAction]:
        return []

    def on_metadata(self, view: AdversaryView, meta: Metadata) -> List[AdversaryAction]:
        return []

    def on_payload(self, view: AdversaryView, msg: Message, seq: int) -> List[AdversaryAction]:
        return []

    def on_timer(self, view: AdversaryView) -> List[AdversaryAction]:
        return []
