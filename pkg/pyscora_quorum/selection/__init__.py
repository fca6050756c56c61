from dataclasses import dataclass
from typing import Iterable, List, Tuple
from ..crypto import hash_bytes
from ..ledger import TransactionId
from ..utils import SelectionError
from ..constants import SELECTION_ITERATION_FACTOR


@dataclass(frozen=True)
class Quorum:
    members: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.members)

    def __contains__(self, validator: int) -> bool:
        return validator in self.members

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


def server_of(digest: bytes, n: int) -> int:
    return int.from_bytes(digest, 'big') % n


def seller_tx_seed(tid: TransactionId | bytes, N_s: bytes) -> bytes:
    """h = H(encode(tid) ‖ N_s)."""

    encoded = tid.encoding() if isinstance(tid, TransactionId) else bytes(tid)

    return hash_bytes(encoded + N_s)


def select_quorum(tid: TransactionId | bytes, N_s: bytes, n: int, m: int) -> Quorum:
    """Pick `m` distinct validators by walking the hash chain `H(h ‖ j)` for j = 1, 2, ...

    Args:
        tid (TransactionId | bytes): Transaction id, or its canonical encoding.
        N_s (bytes): Seller nonce.
        n (int): Number of validators.
        m (int): Quorum size.

    Raises:
        SelectionError: If `m > n` or the walk does not finish within `64 * m` steps.

    Returns:
        Quorum: Members in selection order.
    """

    if m > n or m < 1:
        raise SelectionError(f'Quorum size must lie in [1, n={n}], got {m}.')

    h = seller_tx_seed(tid, N_s)
    members: List[int] = []
    seen = set()

    for j in range(1, SELECTION_ITERATION_FACTOR * m + 1):
        candidate = server_of(hash_bytes(h + j.to_bytes(8, 'big')), n)
        if candidate not in seen:
            seen.add(candidate)
            members.append(candidate)
            if len(members) == m:
                return Quorum(members=tuple(members))

    raise SelectionError(f'Selection did not reach {m} members in {SELECTION_ITERATION_FACTOR * m} steps.')


def verify_quorum(tid: TransactionId | bytes, N_s: bytes, n: int, m: int, claimed: Quorum | Iterable[int]) -> bool:
    try:
        expected = select_quorum(tid, N_s, n, m)
    except SelectionError:
        return False

    claimed_members = list(claimed.members if isinstance(claimed, Quorum) else claimed)

    return len(claimed_members) == m and set(claimed_members) == set(expected.members)


__all__ = ['Quorum', 'server_of', 'seller_tx_seed', 'select_quorum', 'verify_quorum']
