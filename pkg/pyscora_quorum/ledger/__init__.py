from dataclasses import dataclass, field
from typing import Any, FrozenSet, Iterable, List, Tuple
from .encoding import encode, decode
from ..crypto import hash_bytes, sign, KeyPair, KeyRegistry
from ..utils import EncodingError, ProtocolError
from ..constants import PAY_TAG, SETTLE_TAG


def _as_bytes(value: Any, what: str) -> bytes:
    if not isinstance(value, (bytes, bytearray)):
        raise EncodingError(f'{what} must be bytes.')

    return bytes(value)


def _as_int(value: Any, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise EncodingError(f'{what} must be an integer.')

    return value


def _as_list(value: Any, what: str, size: int | None = None) -> List[Any]:
    if not isinstance(value, list) or (size != None and len(value) != size):
        raise EncodingError(f'{what} must be a list{"" if size == None else f" of {size} items"}.')

    return value


@dataclass(frozen=True)
class Validation:
    fund_encoding: bytes
    sigma: bytes
    validator: bytes


@dataclass(frozen=True)
class Fund:
    fid: bytes
    fbl: int
    owners: FrozenSet[bytes]
    fcert: FrozenSet[Validation] = field(default_factory=frozenset, compare=False)

    def __post_init__(self) -> None:
        if self.fbl < 0:
            raise ProtocolError(f'Fund balance must be non-negative, got {self.fbl}.')

        object.__setattr__(self, 'owners', frozenset(self.owners))
        object.__setattr__(self, 'fcert', frozenset(self.fcert))

    def encoding(self) -> bytes:
        """Canonical ⟨F⟩ = (fid, fbl, owners), the bytes validators sign."""

        return encode([self.fid, self.fbl, sorted(self.owners)])

    def with_certificate(self, validations: Iterable[Validation]) -> 'Fund':
        return Fund(fid=self.fid, fbl=self.fbl, owners=self.owners, fcert=frozenset(validations))

    def to_wire(self) -> List[Any]:
        certificate = sorted([v.validator, v.sigma] for v in self.fcert)

        return [self.fid, self.fbl, sorted(self.owners), certificate]

    @classmethod
    def from_wire(cls, wire: Any) -> 'Fund':
        fid, fbl, owners, certificate = _as_list(wire, 'Fund', 4)
        owners = [_as_bytes(owner, 'Fund owner') for owner in _as_list(owners, 'Fund owners')]
        fund = cls(fid=_as_bytes(fid, 'Fund id'), fbl=_as_int(fbl, 'Fund balance'), owners=frozenset(owners))

        validations = []
        for item in _as_list(certificate, 'Fund certificate'):
            validator, sigma = _as_list(item, 'Validation', 2)
            validations.append(
                Validation(
                    fund_encoding=fund.encoding(),
                    sigma=_as_bytes(sigma, 'Validation signature'),
                    validator=_as_bytes(validator, 'Validator'),
                )
            )

        return fund.with_certificate(validations)


@dataclass(frozen=True)
class TransactionId:
    fund: Fund
    buyer: bytes
    seller: bytes

    def encoding(self) -> bytes:
        return encode([self.fund.fid, self.buyer, self.seller])

    def to_wire(self) -> List[Any]:
        return [self.fund.to_wire(), self.buyer, self.seller]

    @classmethod
    def from_wire(cls, wire: Any) -> 'TransactionId':
        fund, buyer, seller = _as_list(wire, 'TransactionId', 3)

        return cls(
            fund=Fund.from_wire(fund), buyer=_as_bytes(buyer, 'Buyer'), seller=_as_bytes(seller, 'Seller')
        )


@dataclass(frozen=True)
class PaymentCertificate:
    tid: TransactionId
    N_s: bytes
    h_s: bytes
    witnesses: FrozenSet[Tuple[bytes, bytes]]

    def to_wire(self) -> List[Any]:
        return [self.tid.to_wire(), self.N_s, self.h_s, sorted([pk, sig] for pk, sig in self.witnesses)]

    @classmethod
    def from_wire(cls, wire: Any) -> 'PaymentCertificate':
        tid, N_s, h_s, witnesses = _as_list(wire, 'PaymentCertificate', 4)
        pairs = []
        for item in _as_list(witnesses, 'Witnesses'):
            pk, sig = _as_list(item, 'Witness', 2)
            pairs.append((_as_bytes(pk, 'Witness validator'), _as_bytes(sig, 'Witness signature')))

        return cls(
            tid=TransactionId.from_wire(tid),
            N_s=_as_bytes(N_s, 'N_s'),
            h_s=_as_bytes(h_s, 'h_s'),
            witnesses=frozenset(pairs),
        )


def witness_payload(tid: TransactionId, h_s: bytes) -> bytes:
    """Bytes a validator signs when it validates a payment (tid‖h_s)."""

    return encode([tid.encoding(), h_s])


def approval_payload(tid: TransactionId, h_s: bytes, commitment: bytes) -> bytes:
    return encode([tid.encoding(), h_s, commitment])


def validator_commitment(validator: bytes, N_i: bytes) -> bytes:
    return hash_bytes(encode([validator, N_i]))


def share_binding_payload(share: bytes, validator: bytes, N_prop: bytes) -> bytes:
    return encode([share, validator, N_prop])


def payment_fund_id(tid: TransactionId, N_s: bytes) -> bytes:
    return hash_bytes(tid.encoding() + N_s + PAY_TAG)


def derive_payment_fund(tid: TransactionId, N_s: bytes, parent_balance: int, k2_prime: int) -> Fund:
    """Fund created by a partial spend: `fbl = parent_balance // k2_prime`, owned by the seller."""

    return Fund(fid=payment_fund_id(tid, N_s), fbl=parent_balance // k2_prime, owners=frozenset([tid.seller]))


def seller_settled_fund_id(payment_fid: bytes) -> bytes:
    return hash_bytes(payment_fid + SETTLE_TAG)


def buyer_settled_fund_id(fid: bytes) -> bytes:
    return hash_bytes(fid)


def derive_settled_fund(fund: Fund, buyer_side: bool = False) -> bytes:
    """Identifier of the fund that settling `fund` yields.

    Seller settlement hashes the payment fund id with the settle tag; buyer settlement hashes the parent fid.
    """

    return buyer_settled_fund_id(fund.fid) if buyer_side else seller_settled_fund_id(fund.fid)


def validate_fund(key: KeyPair, fund: Fund) -> Validation:
    encoding = fund.encoding()

    return Validation(fund_encoding=encoding, sigma=sign(key, encoding), validator=key.public)


def valid_validators(fund: Fund, registry: KeyRegistry) -> FrozenSet[bytes]:
    encoding = fund.encoding()

    return frozenset(
        v.validator
        for v in fund.fcert
        if v.fund_encoding == encoding and registry.verify(v.validator, encoding, v.sigma)
    )


def is_fully_certified(fund: Fund, f: int, registry: KeyRegistry) -> bool:
    return len(valid_validators(fund, registry)) >= f + 1


def genesis_fund(label: str, owner: bytes, balance: int, signers: Iterable[KeyPair]) -> Fund:
    fund = Fund(fid=hash_bytes(encode(['GENESIS', label])), fbl=balance, owners=frozenset([owner]))

    return fund.with_certificate(validate_fund(key, fund) for key in signers)


__all__ = [
    'encode',
    'decode',
    'Validation',
    'Fund',
    'TransactionId',
    'PaymentCertificate',
    'witness_payload',
    'approval_payload',
    'validator_commitment',
    'share_binding_payload',
    'payment_fund_id',
    'derive_payment_fund',
    'seller_settled_fund_id',
    'buyer_settled_fund_id',
    'derive_settled_fund',
    'validate_fund',
    'valid_validators',
    'is_fully_certified',
    'genesis_fund',
]
