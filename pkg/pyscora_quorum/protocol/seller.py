from enum import Enum
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Sequence, Set, Tuple
from .party import Party, party_of, logger
from ..crypto import KeyPair, hash_bytes, new_nonce
from ..ledger import (
    Fund,
    PaymentCertificate,
    TransactionId,
    Validation,
    encode,
    payment_fund_id,
    seller_settled_fund_id,
    validator_commitment,
    witness_payload,
)
from ..messages import Message, MessageKind, PartyContext, quorum_context
from ..params import QuorumParams, payment_amount, reply_threshold, settle_threshold, witness_threshold
from ..propagate import PropagateClient, handle_propagate
from ..selection import Quorum, select_quorum


class SellerPhase(str, Enum):
    QUORUM_SENT = 'QUORUM_SENT'
    VALIDATING = 'VALIDATING'
    CERTIFIED = 'CERTIFIED'
    FAILED = 'FAILED'


@dataclass
class SellerPayment:
    tid: TransactionId
    N_s: bytes
    h_s: bytes
    quorum: Quorum
    members: List[str]
    nonces: List[bytes]
    commitments: List[bytes]
    replies: Set[str] = field(default_factory=set)
    witnesses: Dict[str, bytes] = field(default_factory=dict)
    phase: SellerPhase = SellerPhase.QUORUM_SENT


@dataclass
class SellerSettlement:
    certificate: PaymentCertificate
    N_settle: bytes
    expected: Fund
    settle_witnesses: Dict[str, Validation] = field(default_factory=dict)
    result: Fund | None = None


class Seller(Party):
    role = 'seller'

    def __init__(
        self,
        key: KeyPair,
        params: QuorumParams,
        validators: Sequence[str],
        auto_settle: bool = False,
    ) -> None:
        super().__init__(key, params, validators)
        self.auto_settle = auto_settle
        self.payments: Dict[bytes, SellerPayment] = {}
        self.certificates: Dict[bytes, PaymentCertificate] = {}
        self.settlements: Dict[bytes, SellerSettlement] = {}
        self.settled: Dict[bytes, Fund] = {}
        self.propagator = PropagateClient(key, validators, params.f)
        self._handlers = {
            MessageKind.PAY: self._on_pay,
            MessageKind.SIGNED_QUORUM: self._on_signed_quorum,
            MessageKind.VALID: self._on_reply,
            MessageKind.INVALID: self._on_reply,
            MessageKind.SHARE_ACK: self._on_propagate,
            MessageKind.RECONSTRUCTED: self._on_propagate,
            MessageKind.SETTLE_VALID: self._on_settle_valid,
        }

    def _on_propagate(self, ctx: PartyContext, msg: Message) -> None:
        handle_propagate(ctx, msg, self.propagator, None)

    def propagate(self, ctx: PartyContext, message: bytes) -> bytes:
        return self.propagator.start(ctx, message)

    def _on_pay(self, ctx: PartyContext, msg: Message) -> None:
        (tid,) = msg.body
        if tid.seller != self.pk or party_of(tid.buyer) != msg.sender:
            return

        p = self.params
        N_s = new_nonce(ctx.rng)
        quorum = select_quorum(tid, N_s, p.n, p.m)
        members = [self.validators[index] for index in quorum]
        nonces = [new_nonce(ctx.rng) for _ in members]
        commitments = [validator_commitment(v.encode('utf-8'), N_i) for v, N_i in zip(members, nonces)]
        h_s = hash_bytes(N_s)

        self.payments[h_s] = SellerPayment(
            tid=tid, N_s=N_s, h_s=h_s, quorum=quorum, members=members, nonces=nonces, commitments=commitments
        )
        ctx.snapshot('QUORUM_DRAW', fund=tid.fund.fid.hex(), h_s=h_s.hex(), members=members)
        ctx.send(msg.sender, MessageKind.QUORUM, (tid, h_s, commitments))

    def _on_signed_quorum(self, ctx: PartyContext, msg: Message) -> None:
        tid, h_s, signatures = msg.body
        payment = self.payments.get(h_s)
        if payment == None or payment.phase != SellerPhase.QUORUM_SENT or party_of(payment.tid.buyer) != msg.sender:
            return
        if len(signatures) != len(payment.members):
            return

        payment.phase = SellerPhase.VALIDATING
        context = quorum_context(h_s)
        for validator, sigma, N_i in zip(payment.members, signatures, payment.nonces):
            ctx.send(validator, MessageKind.VALIDATE, (payment.tid, h_s, sigma, N_i), context=context)

    def _on_reply(self, ctx: PartyContext, msg: Message) -> None:
        h_s = msg.body[1]
        payment = self.payments.get(h_s)
        if payment == None or payment.phase != SellerPhase.VALIDATING:
            return
        if msg.sender not in payment.members or msg.sender in payment.replies:
            return

        payment.replies.add(msg.sender)
        if msg.kind == MessageKind.VALID:
            sigma = msg.body[2]
            if ctx.registry.verify(msg.sender.encode('utf-8'), witness_payload(payment.tid, h_s), sigma):
                payment.witnesses[msg.sender] = sigma

        if len(payment.replies) >= reply_threshold(self.params):
            self._decide(ctx, payment)

    def _decide(self, ctx: PartyContext, payment: SellerPayment) -> None:
        tid = payment.tid

        if len(payment.witnesses) < witness_threshold(self.params):
            payment.phase = SellerPhase.FAILED
            ctx.record(
                'PAYMENT_FAILED',
                fund=tid.fund.fid.hex(),
                buyer=party_of(tid.buyer),
                h_s=payment.h_s.hex(),
                witnesses=len(payment.witnesses),
            )
            return

        payment.phase = SellerPhase.CERTIFIED
        certificate = PaymentCertificate(
            tid=tid,
            N_s=payment.N_s,
            h_s=payment.h_s,
            witnesses=frozenset((v.encode('utf-8'), sigma) for v, sigma in payment.witnesses.items()),
        )
        payment_fid = payment_fund_id(tid, payment.N_s)
        self.certificates[payment_fid] = certificate

        ctx.record(
            'CERTIFICATE',
            fund=tid.fund.fid.hex(),
            buyer=party_of(tid.buyer),
            h_s=payment.h_s.hex(),
            payment=payment_fid.hex(),
            amount=payment_amount(self.params, tid.fund.fbl),
            witnesses=sorted(payment.witnesses),
        )
        logger.info(f'[pay] {self.party_id} holds a certificate with {len(payment.witnesses)} witnesses')

        if self.auto_settle:
            self.settle(ctx, certificate)

    def settle(self, ctx: PartyContext, certificate: PaymentCertificate) -> bytes:
        """Propagate the certificate and collect n-f signatures over the settled fund.

        Returns:
            bytes: The propagation nonce of this settlement.
        """

        tid = certificate.tid
        payment_fid = payment_fund_id(tid, certificate.N_s)
        expected = Fund(
            fid=seller_settled_fund_id(payment_fid),
            fbl=payment_amount(self.params, tid.fund.fbl),
            owners=frozenset([self.pk]),
        )
        witnesses = sorted([pk, sigma] for pk, sigma in certificate.witnesses)
        payload = encode(['SELLER_SETTLE', tid.to_wire(), certificate.N_s, witnesses])

        N_settle = self.propagator.start(ctx, payload)
        self.settlements[N_settle] = SellerSettlement(certificate=certificate, N_settle=N_settle, expected=expected)
        ctx.record('SELLER_SETTLE_STARTED', fund=tid.fund.fid.hex(), payment=payment_fid.hex())

        return N_settle

    def settle_all(self, ctx: PartyContext) -> List[bytes]:
        return [self.settle(ctx, certificate) for certificate in list(self.certificates.values())]

    def _on_settle_valid(self, ctx: PartyContext, msg: Message) -> None:
        candidate, N_settle = msg.body
        settlement = self.settlements.get(N_settle)
        if settlement == None or settlement.result != None or msg.sender not in self.validators:
            return
        if candidate.encoding() != settlement.expected.encoding():
            return

        encoding = settlement.expected.encoding()
        validation = next(
            (
                v
                for v in candidate.fcert
                if party_of(v.validator) == msg.sender and ctx.registry.verify(v.validator, encoding, v.sigma)
            ),
            None,
        )
        if validation == None:
            return

        settlement.settle_witnesses.setdefault(msg.sender, validation)
        if len(settlement.settle_witnesses) >= settle_threshold(self.params):
            result = settlement.expected.with_certificate(settlement.settle_witnesses.values())
            settlement.result = result
            payment_fid = payment_fund_id(settlement.certificate.tid, settlement.certificate.N_s)
            self.settled[payment_fid] = result

            ctx.record(
                'SELLER_SETTLED',
                fund=settlement.certificate.tid.fund.fid.hex(),
                payment=payment_fid.hex(),
                settled=result.fid.hex(),
                balance=result.fbl,
                signers=len(settlement.settle_witnesses),
            )
            logger.info(f'[settle] {self.party_id} settled a payment of {result.fbl}')

    def secrets(self) -> Iterator[Tuple[Any, ...]]:
        for payment in self.payments.values():
            yield ('nonce', payment.tid, payment.N_s)
        yield from self.propagator.secrets()
