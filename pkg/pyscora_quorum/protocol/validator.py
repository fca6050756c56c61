from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Sequence, Set, Tuple
from .party import Party, party_of, logger
from ..crypto import KeyPair, KeyRegistry, hash_bytes, sign
from ..ledger import (
    Fund,
    TransactionId,
    approval_payload,
    buyer_settled_fund_id,
    decode,
    encode,
    is_fully_certified,
    payment_fund_id,
    seller_settled_fund_id,
    validate_fund,
    validator_commitment,
    witness_payload,
)
from ..messages import Message, MessageKind, PartyContext, quorum_context
from ..params import QuorumParams, payment_amount, settle_threshold, witness_threshold
from ..propagate import PropagateClient, PropagateServer, handle_propagate
from ..selection import select_quorum
from ..utils import QuorumError
from ..constants import NONE_TAG

TransactionKey = Tuple[bytes, bytes]


@dataclass
class SellerSettleRequest:
    client: str
    N_settle: bytes
    tid: TransactionId
    N_s: bytes
    witnesses: List[Tuple[bytes, bytes]]


@dataclass
class BuyerSettlementState:
    fund: Fund
    settle_validators: Set[str] = field(default_factory=set)
    payments: Dict[TransactionKey, TransactionId] = field(default_factory=dict)
    folded: bool = False
    aborted: bool = False
    deferred: List[SellerSettleRequest] = field(default_factory=list)


def _none_attestation(fid: bytes) -> bytes:
    return encode([fid, NONE_TAG])


class Validator(Party):
    """Validates partial spends and takes part in seller and buyer settlement.

    `validated_fund` holds every fund this validator approved one payment from; `settle` every fund
    with an observed buyer settlement. Together they guarantee at most one approval per fund and none
    after settlement started.
    """

    role = 'validator'

    def __init__(self, key: KeyPair, params: QuorumParams, validators: Sequence[str], registry: KeyRegistry) -> None:
        super().__init__(key, params, validators)
        self.registry = registry
        self.validated_fund: Set[bytes] = set()
        self.validated_transactions: Dict[bytes, Tuple[TransactionId, bytes, bytes, bytes]] = {}
        self.transactions: Dict[bytes, Set[TransactionKey]] = {}
        self.settle: Set[bytes] = set()
        self.settlements: Dict[bytes, BuyerSettlementState] = {}
        self.propagator = PropagateClient(key, validators, params.f)
        self.server = PropagateServer(key, validators, params.f, registry, on_obtained=self._on_obtained)
        self._handlers = {
            MessageKind.VALIDATE: self._on_validate,
            MessageKind.SETTLE: self._on_settle,
            MessageKind.SHARE: self._on_propagate,
            MessageKind.SHARE_ACK: self._on_propagate,
            MessageKind.RECONSTRUCT: self._on_propagate,
            MessageKind.FORWARD: self._on_propagate,
            MessageKind.RECONSTRUCTED: self._on_propagate,
        }

    def payments(self, fid: bytes) -> Dict[TransactionKey, TransactionId]:
        state = self.settlements.get(fid)

        return dict(state.payments) if state else {}

    def settle_validators(self, fid: bytes) -> Set[str]:
        state = self.settlements.get(fid)

        return set(state.settle_validators) if state else set()

    def _on_propagate(self, ctx: PartyContext, msg: Message) -> None:
        handle_propagate(ctx, msg, self.propagator, self.server)

    def propagate(self, ctx: PartyContext, message: bytes) -> bytes:
        return self.propagator.start(ctx, message)

    def payment_valid(self, tid: TransactionId, h_s: bytes, sigma: bytes, N: bytes, seller: str) -> bool:
        fid = tid.fund.fid
        commitment = validator_commitment(self.pk, N)

        return (
            fid not in self.settle
            and tid.buyer in tid.fund.owners
            and party_of(tid.seller) == seller
            and fid not in self.validated_fund
            and self.registry.verify(tid.buyer, approval_payload(tid, h_s, commitment), sigma)
        )

    def _on_validate(self, ctx: PartyContext, msg: Message) -> None:
        tid, h_s, sigma, N = msg.body
        context = quorum_context(h_s)

        if not self.payment_valid(tid, h_s, sigma, N, msg.sender):
            ctx.send(msg.sender, MessageKind.INVALID, (tid, h_s), context=context)
            return

        self.validated_fund.add(tid.fund.fid)
        self.validated_transactions[tid.fund.fid] = (tid, h_s, sigma, N)
        ctx.send(msg.sender, MessageKind.VALID, (tid, h_s, sign(self.key, witness_payload(tid, h_s))), context=context)

    def _on_settle(self, ctx: PartyContext, msg: Message) -> None:
        (fund,) = msg.body
        if msg.sender.encode('utf-8') not in fund.owners or not is_fully_certified(fund, self.params.f, self.registry):
            return

        self._join_buyer_settlement(ctx, fund)

    def _join_buyer_settlement(self, ctx: PartyContext, fund: Fund) -> BuyerSettlementState:
        state = self.settlements.get(fund.fid)
        if state != None:
            return state

        self.settle.add(fund.fid)
        state = BuyerSettlementState(fund=fund)
        self.settlements[fund.fid] = state

        witnessed = self.validated_transactions.get(fund.fid)
        if witnessed != None:
            tid, h_s, sigma, N = witnessed
            evidence = ['payment', tid.to_wire(), h_s, sigma, N]
        else:
            evidence = ['none', sign(self.key, _none_attestation(fund.fid))]

        self.propagator.start(ctx, encode(['BUYER_SETTLE', fund.to_wire(), self.pk, evidence]))

        return state

    def _on_obtained(self, ctx: PartyContext, client: str, N_prop: bytes, message: bytes) -> None:
        try:
            decoded = decode(message)
            tag = decoded[0]
            if tag == 'BUYER_SETTLE':
                self._on_buyer_settle_evidence(ctx, client, decoded)
            elif tag == 'SELLER_SETTLE':
                _, tid_wire, N_s, witnesses = decoded
                request = SellerSettleRequest(
                    client=client,
                    N_settle=N_prop,
                    tid=TransactionId.from_wire(tid_wire),
                    N_s=N_s,
                    witnesses=[(pk, sigma) for pk, sigma in witnesses],
                )
                self._on_seller_settle(ctx, request)
        except (QuorumError, ValueError, TypeError, IndexError, AttributeError) as err:
            logger.debug(f'[propagate] {self.party_id} ignored a message from {client}: {err!r}')

    def _on_buyer_settle_evidence(self, ctx: PartyContext, client: str, decoded: List[Any]) -> None:
        _, fund_wire, announcer, evidence = decoded
        if client not in self.validators or announcer != client.encode('utf-8'):
            return

        fund = Fund.from_wire(fund_wire)
        if not is_fully_certified(fund, self.params.f, self.registry):
            return

        state = self._join_buyer_settlement(ctx, fund)
        if state.folded or client in state.settle_validators:
            return

        if evidence[0] == 'payment':
            _, tid_wire, h_s, sigma, N = evidence
            tid = TransactionId.from_wire(tid_wire)
            commitment = validator_commitment(announcer, N)
            if (
                tid.fund.fid == fund.fid
                and tid.buyer in fund.owners
                and self.registry.verify(tid.buyer, approval_payload(tid, h_s, commitment), sigma)
            ):
                state.payments[(tid.encoding(), h_s)] = tid
        elif evidence[0] == 'none':
            if not self.registry.verify(announcer, _none_attestation(fund.fid), evidence[1]):
                return
        else:
            return

        state.settle_validators.add(client)
        if len(state.settle_validators) >= settle_threshold(self.params):
            self._fold(ctx, state)

    def _fold(self, ctx: PartyContext, state: BuyerSettlementState) -> None:
        fund = state.fund
        transactions = self.transactions.setdefault(fund.fid, set())
        transactions.update(state.payments)
        state.folded = True

        ctx.snapshot(
            'SETTLEMENT_FOLD',
            fund=fund.fid.hex(),
            transactions=sorted(f'{hash_bytes(tid).hex()}:{h_s.hex()}' for tid, h_s in transactions),
        )

        if len(transactions) > self.params.k1:
            state.aborted = True
            ctx.record('SETTLEMENT_ABORTED', fund=fund.fid.hex(), transactions=len(transactions))
            logger.warning(f'[settle] {self.party_id} aborted a buyer settlement with {len(transactions)} payments')
        else:
            balance = fund.fbl - len(transactions) * payment_amount(self.params, fund.fbl)
            settled = Fund(fid=buyer_settled_fund_id(fund.fid), fbl=balance, owners=fund.owners)
            settled = settled.with_certificate([validate_fund(self.key, settled)])
            for owner in sorted(fund.owners):
                ctx.send(party_of(owner), MessageKind.SETTLED_FUND, (settled,))

        deferred, state.deferred = state.deferred, []
        for request in deferred:
            self._on_seller_settle(ctx, request)

    def seller_settle_valid(self, request: SellerSettleRequest) -> bool:
        """Quorum, witness and seller checks of a seller settlement; the settle guard is checked separately."""

        p = self.params
        tid = request.tid
        if party_of(tid.seller) != request.client or not is_fully_certified(tid.fund, p.f, self.registry):
            return False

        quorum = {self.validators[index] for index in select_quorum(tid, request.N_s, p.n, p.m)}
        h_s = hash_bytes(request.N_s)
        payload = witness_payload(tid, h_s)

        witnesses = set()
        for pk, sigma in request.witnesses:
            validator = party_of(pk)
            if validator not in quorum or not self.registry.verify(pk, payload, sigma):
                return False
            witnesses.add(validator)

        return len(witnesses) >= witness_threshold(p)

    def _on_seller_settle(self, ctx: PartyContext, request: SellerSettleRequest) -> None:
        if not self.seller_settle_valid(request):
            return

        tid = request.tid
        fid = tid.fund.fid
        key = (tid.encoding(), hash_bytes(request.N_s))

        if fid in self.settle:
            state = self.settlements[fid]
            if not state.folded:
                state.deferred.append(request)
                return
            if key not in self.transactions.get(fid, set()):
                return

        self.transactions.setdefault(fid, set()).add(key)

        settled = Fund(
            fid=seller_settled_fund_id(payment_fund_id(tid, request.N_s)),
            fbl=payment_amount(self.params, tid.fund.fbl),
            owners=frozenset([tid.seller]),
        )
        settled = settled.with_certificate([validate_fund(self.key, settled)])
        ctx.send(request.client, MessageKind.SETTLE_VALID, (settled, request.N_settle))

    def secrets(self) -> Iterator[Tuple[Any, ...]]:
        yield from self.server.secrets()
        yield from self.propagator.secrets()
