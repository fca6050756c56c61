from typing import Any, Callable, Dict, Iterator, Sequence, Tuple
from ..crypto import KeyPair, KeyRegistry
from ..messages import Message, MessageKind, PartyContext
from ..params import QuorumParams
from ..utils import setup_logger, QuorumError

logger = setup_logger('Quorum Protocol')

Handler = Callable[[PartyContext, Message], None]

# Raised by malformed bodies; such messages are dropped.
_MALFORMED = (QuorumError, ValueError, TypeError, AttributeError, KeyError, IndexError)


class Party:
    role = 'party'

    def __init__(self, key: KeyPair, params: QuorumParams, validators: Sequence[str]) -> None:
        self.key = key
        self.params = params
        self.validators = list(validators)
        self.corrupted = False
        self._handlers: Dict[MessageKind, Handler] = {}

    @property
    def party_id(self) -> str:
        return self.key.party

    @property
    def pk(self) -> bytes:
        return self.key.public

    def on_corrupted(self) -> None:
        self.corrupted = True

    def handle(self, ctx: PartyContext, msg: Message) -> None:
        handler = self._handlers.get(msg.kind)
        if handler == None:
            return

        try:
            handler(ctx, msg)
        except _MALFORMED as err:
            logger.debug(f'[handle] {self.party_id} dropped {msg.kind.value} from {msg.sender}: {err!r}')

    def secrets(self) -> Iterator[Tuple[Any, ...]]:
        """Items an adversary learns from this party's memory on corruption."""

        return iter(())


def party_of(pk: bytes) -> str:
    return pk.decode('utf-8')
