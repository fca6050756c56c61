from enum import Enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, Sequence
from .party import Party, party_of, logger
from ..crypto import KeyPair, hash_bytes, sign
from ..ledger import Fund, TransactionId, Validation, approval_payload, buyer_settled_fund_id, is_fully_certified
from ..messages import Message, MessageKind, PartyContext
from ..params import QuorumParams, buyer_settle_threshold
from ..utils import ProtocolError


class BuyerPhase(str, Enum):
    SENT_PAY = 'SENT_PAY'
    AWAITING_QUORUM = 'AWAITING_QUORUM'
    SIGNED = 'SIGNED'
    ABORTED = 'ABORTED'
    SETTLING = 'SETTLING'
    DONE = 'DONE'


@dataclass
class BuyerPayment:
    tid: TransactionId
    phase: BuyerPhase = BuyerPhase.SENT_PAY
    h_s: bytes | None = None


@dataclass
class BuyerSettlement:
    fund: Fund
    phase: BuyerPhase = BuyerPhase.SETTLING
    replies: Dict[bytes, Dict[str, Validation]] = field(default_factory=dict)
    candidates: Dict[bytes, Fund] = field(default_factory=dict)
    result: Fund | None = None


class Buyer(Party):
    role = 'buyer'

    def __init__(
        self,
        key: KeyPair,
        params: QuorumParams,
        validators: Sequence[str],
        funds: Iterable[Fund] = (),
        labels: Dict[str, bytes] | None = None,
    ) -> None:
        super().__init__(key, params, validators)
        self.funds: Dict[bytes, Fund] = {fund.fid: fund for fund in funds}
        self.labels: Dict[str, bytes] = dict(labels or {})
        self.payments: Dict[bytes, BuyerPayment] = {}
        self.started: Dict[bytes, int] = {}
        self.settlements: Dict[bytes, BuyerSettlement] = {}
        self._handlers = {
            MessageKind.QUORUM: self._on_quorum,
            MessageKind.SETTLED_FUND: self._on_settled_fund,
        }

    def resolve_fund(self, fund: str | bytes | Fund) -> Fund:
        if isinstance(fund, Fund):
            return fund

        fid = self.labels.get(fund, fund) if isinstance(fund, str) else fund
        if fid not in self.funds:
            raise ProtocolError(f'{self.party_id} holds no fund {fund!r}.')

        return self.funds[fid]

    def _check_spendable(self, ctx: PartyContext, fund: Fund) -> None:
        if self.pk not in fund.owners:
            raise ProtocolError(f'{self.party_id} is not an owner of the fund.')
        if not is_fully_certified(fund, self.params.f, ctx.registry):
            raise ProtocolError('Fund is not fully certified.')

    def pay(self, ctx: PartyContext, fund: str | bytes | Fund, seller: str) -> TransactionId:
        """Start a partial spend of `fund` towards `seller`

        Args:
            ctx (PartyContext): Execution context.
            fund (str | bytes | Fund): Fund label, fid or value.
            seller (str): Seller party id.

        Raises:
            ProtocolError: Not an owner, fund not certified, honest k1 limit reached, or the payment already runs.

        Returns:
            TransactionId: The payment's transaction id.
        """

        fund = self.resolve_fund(fund)
        self._check_spendable(ctx, fund)

        if not self.corrupted:
            if self.started.get(fund.fid, 0) >= self.params.k1:
                raise ProtocolError(f'{self.party_id} already started k1={self.params.k1} payments from this fund.')
            if fund.fid in self.settlements:
                raise ProtocolError('Fund is being settled.')

        tid = TransactionId(fund=fund, buyer=self.pk, seller=seller.encode('utf-8'))
        if tid.encoding() in self.payments:
            raise ProtocolError(f'Payment to {seller} from this fund already in progress.')

        self.payments[tid.encoding()] = BuyerPayment(tid=tid)
        self.started[fund.fid] = self.started.get(fund.fid, 0) + 1

        ctx.send(seller, MessageKind.PAY, (tid,))
        self.payments[tid.encoding()].phase = BuyerPhase.AWAITING_QUORUM
        ctx.record('PAY_STARTED', fund=fund.fid.hex(), seller=seller, tid=hash_bytes(tid.encoding()).hex())

        return tid

    def _on_quorum(self, ctx: PartyContext, msg: Message) -> None:
        tid, h_s, commitments = msg.body
        payment = self.payments.get(tid.encoding())
        if payment == None or payment.phase != BuyerPhase.AWAITING_QUORUM or party_of(tid.seller) != msg.sender:
            return

        if len(commitments) != self.params.m:
            payment.phase = BuyerPhase.ABORTED
            ctx.record('PAYMENT_ABORTED', fund=tid.fund.fid.hex(), seller=msg.sender, commitments=len(commitments))
            return

        signatures = [sign(self.key, approval_payload(payment.tid, h_s, commitment)) for commitment in commitments]
        payment.phase = BuyerPhase.SIGNED
        payment.h_s = h_s
        ctx.send(msg.sender, MessageKind.SIGNED_QUORUM, (payment.tid, h_s, signatures))

    def settle(self, ctx: PartyContext, fund: str | bytes | Fund) -> None:
        fund = self.resolve_fund(fund)
        self._check_spendable(ctx, fund)

        if fund.fid in self.settlements:
            raise ProtocolError('Settlement of this fund already started.')

        self.settlements[fund.fid] = BuyerSettlement(fund=fund)
        for validator in self.validators:
            ctx.send(validator, MessageKind.SETTLE, (fund,))

        ctx.record('BUYER_SETTLE_STARTED', fund=fund.fid.hex())

    def _on_settled_fund(self, ctx: PartyContext, msg: Message) -> None:
        (candidate,) = msg.body
        if msg.sender not in self.validators:
            return

        source = next(
            (s for s in self.settlements.values() if buyer_settled_fund_id(s.fund.fid) == candidate.fid), None
        )
        if source == None or source.result != None or candidate.owners != source.fund.owners:
            return

        encoding = candidate.encoding()
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

        replies = source.replies.setdefault(encoding, {})
        replies.setdefault(msg.sender, validation)
        source.candidates.setdefault(encoding, candidate)

        if len(replies) >= buyer_settle_threshold(self.params):
            result = source.candidates[encoding].with_certificate(replies.values())
            source.result = result
            source.phase = BuyerPhase.DONE
            self.funds[result.fid] = result

            ctx.record(
                'BUYER_SETTLED',
                fund=source.fund.fid.hex(),
                settled=result.fid.hex(),
                balance=result.fbl,
                signers=len(replies),
            )
            logger.info(f'[settle] {self.party_id} settled fund to balance {result.fbl}')
