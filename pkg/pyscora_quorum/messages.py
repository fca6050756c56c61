import numpy as np
from enum import Enum
from dataclasses import dataclass
from typing import Any, Protocol, Tuple
from .crypto import KeyRegistry


class MessageKind(str, Enum):
    PAY = 'PAY'
    QUORUM = 'QUORUM'
    SIGNED_QUORUM = 'SIGNED_QUORUM'
    VALIDATE = 'VALIDATE'
    VALID = 'VALID'
    INVALID = 'INVALID'
    SHARE = 'SHARE'
    SHARE_ACK = 'SHARE_ACK'
    RECONSTRUCT = 'RECONSTRUCT'
    FORWARD = 'FORWARD'
    RECONSTRUCTED = 'RECONSTRUCTED'
    SETTLE = 'SETTLE'
    SETTLE_VALID = 'SETTLE_VALID'
    SETTLED_FUND = 'SETTLED_FUND'


PROPAGATE_KINDS = frozenset(
    [
        MessageKind.SHARE,
        MessageKind.SHARE_ACK,
        MessageKind.RECONSTRUCT,
        MessageKind.FORWARD,
        MessageKind.RECONSTRUCTED,
    ]
)

# Messages whose body starts with a fund carrying the sender's validation.
FUND_SIGNING_KINDS = frozenset([MessageKind.SETTLE_VALID, MessageKind.SETTLED_FUND])


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    sender: str
    receiver: str
    body: Tuple[Any, ...]
    context: str | None = None


def quorum_context(h_s: bytes) -> str:
    return f'quorum:{h_s.hex()}'


def propagate_context(client: str, nonce: bytes) -> str:
    return f'prop:{client}:{nonce.hex()}'


class PartyContext(Protocol):
    """What a party's code may touch while it handles one event."""

    party: str
    rng: np.random.Generator
    registry: KeyRegistry

    @property
    def now(self) -> int:
        ...

    def send(
        self, receiver: str, kind: MessageKind, body: Tuple[Any, ...], context: str | None = None
    ) -> None:
        ...

    def record(self, event: str, **detail: Any) -> None:
        ...

    def snapshot(self, kind: str, **detail: Any) -> None:
        ...
