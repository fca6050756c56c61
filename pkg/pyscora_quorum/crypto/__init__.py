import hmac
import hashlib
import numpy as np
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence
from ..utils import setup_logger, CryptoError, InsufficientSharesError
from ..constants import DEFAULT_HASH_BYTES, DEFAULT_NONCE_BITS, SHAMIR_PRIME, SHAMIR_CHUNK_BYTES

logger = setup_logger('Quorum Crypto')

_ELEMENT_BYTES = (SHAMIR_PRIME.bit_length() + 7) // 8
_LENGTH_PREFIX_BYTES = 4
_CHUNK_MODULUS = 1 << (8 * SHAMIR_CHUNK_BYTES)


def hash_bytes(data: bytes, width: int = DEFAULT_HASH_BYTES) -> bytes:
    """Random-oracle hash: SHA-256 truncated to `width` bytes (16 to 32)."""

    if not 16 <= width <= 32:
        raise CryptoError(f'Hash width must lie in [16, 32], got {width}.')

    return hashlib.sha256(data).digest()[:width]


def new_nonce(rng: np.random.Generator, bits: int = DEFAULT_NONCE_BITS) -> bytes:
    return rng.bytes((bits + 7) // 8)


@dataclass(frozen=True)
class KeyPair:
    party: str
    secret: bytes = field(repr=False)

    @property
    def public(self) -> bytes:
        return self.party.encode('utf-8')


def sign(key: KeyPair, message: bytes) -> bytes:
    return hmac.new(key.secret, msg=message, digestmod=hashlib.sha256).digest()


class KeyRegistry:
    """Trusted verifier holding every party's signing secret.

    Signatures are keyed hashes; only code holding a `KeyPair` can produce them, so the
    adversary signs exclusively through keys handed over on corruption.
    """

    def __init__(self, rng: np.random.Generator, secret_bytes: int = 32) -> None:
        self.__rng = rng
        self.__secret_bytes = secret_bytes
        self.__keys: Dict[bytes, KeyPair] = {}

    def generate(self, party: str) -> KeyPair:
        pk = party.encode('utf-8')
        if pk in self.__keys:
            raise CryptoError(f'Key for {party} already exists.')

        key = KeyPair(party=party, secret=self.__rng.bytes(self.__secret_bytes))
        self.__keys[pk] = key

        return key

    def parties(self) -> List[str]:
        return [key.party for key in self.__keys.values()]

    def verify(self, pk: bytes, message: bytes, signature: bytes) -> bool:
        if not isinstance(signature, (bytes, bytearray)) or not isinstance(message, (bytes, bytearray)):
            return False

        key = self.__keys.get(bytes(pk)) if isinstance(pk, (bytes, bytearray)) else None
        if key == None:
            return False

        return hmac.compare_digest(sign(key, bytes(message)), bytes(signature))


@dataclass(frozen=True)
class Share:
    index: int
    data: bytes
    binding: bytes = b''

    def with_binding(self, binding: bytes) -> 'Share':
        return Share(index=self.index, data=self.data, binding=binding)


@dataclass(frozen=True)
class ShareSet:
    shares: List[Share]
    threshold: int
    total: int

    def __getitem__(self, index: int) -> Share:
        """Share for evaluation point `index` (1-based)."""

        return self.shares[index - 1]


def _random_element(rng: np.random.Generator) -> int:
    return int.from_bytes(rng.bytes(_ELEMENT_BYTES), 'big') % SHAMIR_PRIME


def _evaluate(coefficients: Sequence[int], x: int) -> int:
    y = 0
    for coefficient in reversed(coefficients):
        y = (y * x + coefficient) % SHAMIR_PRIME

    return y


def _lagrange_at_zero(indices: Sequence[int], i: int) -> int:
    weight = 1
    for j in indices:
        if j != i:
            weight = weight * j % SHAMIR_PRIME
            weight = weight * pow(j - i, SHAMIR_PRIME - 2, SHAMIR_PRIME) % SHAMIR_PRIME

    return weight


def secret_share(message: bytes, n: int, threshold: int, rng: np.random.Generator) -> ShareSet:
    """Split `message` so that any `threshold` of the `n` shares reconstruct it

    Args:
        message (bytes): Secret to share.
        n (int): Number of shares, evaluated at points 1..n.
        threshold (int): Shares needed to reconstruct.
        rng (np.random.Generator): Randomness for the polynomial coefficients.

    Raises:
        CryptoError: If `threshold` is not in [1, n].

    Returns:
        ShareSet: The `n` shares with no binding attached.
    """

    if not 1 <= threshold <= n:
        raise CryptoError(f'Threshold must lie in [1, {n}], got {threshold}.')

    payload = len(message).to_bytes(_LENGTH_PREFIX_BYTES, 'big') + message
    payload += b'\x00' * (-len(payload) % SHAMIR_CHUNK_BYTES)
    chunks = [
        int.from_bytes(payload[i : i + SHAMIR_CHUNK_BYTES], 'big') for i in range(0, len(payload), SHAMIR_CHUNK_BYTES)
    ]

    columns = [bytearray() for _ in range(n)]
    for chunk in chunks:
        coefficients = [chunk] + [_random_element(rng) for _ in range(threshold - 1)]
        for x in range(1, n + 1):
            columns[x - 1] += _evaluate(coefficients, x).to_bytes(_ELEMENT_BYTES, 'big')

    shares = [Share(index=x, data=bytes(columns[x - 1])) for x in range(1, n + 1)]

    return ShareSet(shares=shares, threshold=threshold, total=n)


def reconstruct_secret(shares: Iterable[Share], threshold: int) -> bytes:
    """Rebuild the shared message from the first `threshold` distinct-index shares.

    Inconsistent shares from a corrupt dealer yield arbitrary bytes instead of an error.

    Raises:
        InsufficientSharesError: If fewer than `threshold` distinct indices are given.
    """

    picked: Dict[int, Share] = {}
    for share in shares:
        if share.index >= 1 and share.index not in picked:
            picked[share.index] = share
        if len(picked) == threshold:
            break

    if len(picked) < threshold:
        raise InsufficientSharesError(f'Need {threshold} shares, got {len(picked)}.')

    indices = list(picked)
    chunk_count = min(len(share.data) // _ELEMENT_BYTES for share in picked.values())
    weights = {i: _lagrange_at_zero(indices, i) for i in indices}

    payload = bytearray()
    for c in range(chunk_count):
        value = 0
        for i, share in picked.items():
            y = int.from_bytes(share.data[c * _ELEMENT_BYTES : (c + 1) * _ELEMENT_BYTES], 'big')
            value = (value + weights[i] * y) % SHAMIR_PRIME
        payload += (value % _CHUNK_MODULUS).to_bytes(SHAMIR_CHUNK_BYTES, 'big')

    if len(payload) < _LENGTH_PREFIX_BYTES:
        return b''

    length = int.from_bytes(payload[:_LENGTH_PREFIX_BYTES], 'big')
    body = bytes(payload[_LENGTH_PREFIX_BYTES:])

    return body[: min(length, len(body))]


__all__ = [
    'hash_bytes',
    'new_nonce',
    'KeyPair',
    'KeyRegistry',
    'sign',
    'Share',
    'ShareSet',
    'secret_share',
    'reconstruct_secret',
]
