import numpy as np
import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from pyscora_quorum.crypto import KeyRegistry, hash_bytes, sign
from pyscora_quorum.ledger import (
    TransactionId,
    approval_payload,
    genesis_fund,
    is_fully_certified,
    validator_commitment,
    witness_payload,
)
from pyscora_quorum.messages import Message, MessageKind
from pyscora_quorum.params import QuorumParams, k2_prime, witness_threshold
from pyscora_quorum.protocol import SellerSettleRequest, Validator
from pyscora_quorum.utils import ProtocolError
from support import RecordingContext

BALANCE = 600


@pytest.fixture
def network(make_network, small_params):
    return make_network(small_params, seed=9)


@pytest.fixture
def fund(network):
    return network.genesis('f0', 'b0', BALANCE)


@pytest.fixture
def buyer(network, fund):
    return network.buyer('b0', [fund])


def _pay(network, buyer, fund, seller='s0'):
    tid = buyer.pay(network.ctx(buyer.party_id), fund, seller)
    network.run()

    return tid


def _kinds(network):
    kinds = {}
    for msg in network.delivered:
        kinds[msg.kind] = kinds.get(msg.kind, 0) + 1

    return kinds


def _approve(network, fund, seller, validator, h_s, N):
    tid = TransactionId(fund=fund, buyer=b'b0', seller=seller.encode('utf-8'))
    commitment = validator_commitment(validator.encode('utf-8'), N)
    sigma = sign(network.keys['b0'], approval_payload(tid, h_s, commitment))

    return Message(MessageKind.VALIDATE, seller, validator, (tid, h_s, sigma, N))


def test_honest_payment_is_certified(network, buyer, fund):
    seller = network.seller('s0')
    _pay(network, buyer, fund)

    certificates = network.ctx('s0').events('CERTIFICATE')
    assert len(certificates) == 1
    assert certificates[0]['amount'] == BALANCE // k2_prime(network.params) == 100
    assert len(certificates[0]['witnesses']) == network.params.m
    assert len(seller.certificates) == 1

    kinds = _kinds(network)
    assert kinds[MessageKind.PAY] == kinds[MessageKind.QUORUM] == kinds[MessageKind.SIGNED_QUORUM] == 1
    assert kinds[MessageKind.VALIDATE] == kinds[MessageKind.VALID] == network.params.m
    assert MessageKind.INVALID not in kinds


def test_quorum_members_come_from_selection(network, buyer, fund):
    seller = network.seller('s0')
    _pay(network, buyer, fund)

    (payment,) = seller.payments.values()
    validated = sorted(msg.receiver for msg in network.delivered if msg.kind == MessageKind.VALIDATE)
    assert validated == sorted(payment.members)
    assert network.ctx('s0').snapshots[0]['kind'] == 'QUORUM_DRAW'


def test_honest_buyer_stops_at_k1(network, buyer, fund):
    network.seller('s0')
    network.seller('s1')
    _pay(network, buyer, fund)

    with pytest.raises(ProtocolError, match='k1'):
        buyer.pay(network.ctx('b0'), fund, 's1')


def test_corrupted_buyer_is_not_limited_by_k1(network, buyer, fund):
    network.seller('s0')
    network.seller('s1')
    buyer.on_corrupted()
    _pay(network, buyer, fund)
    _pay(network, buyer, fund, 's1')

    assert len(network.ctx('b0').events('PAY_STARTED')) == 2


def test_duplicate_payment_is_rejected(network, buyer, fund):
    network.seller('s0')
    buyer.on_corrupted()
    buyer.pay(network.ctx('b0'), fund, 's0')

    with pytest.raises(ProtocolError, match='already in progress'):
        buyer.pay(network.ctx('b0'), fund, 's0')


def test_payment_needs_a_certified_owned_fund(network, fund):
    weak = network.genesis('weak', 'b0', BALANCE, signers=network.validators[: network.params.f])
    buyer = network.buyer('b0', [fund, weak])
    stranger = network.buyer('b1', [fund])

    with pytest.raises(ProtocolError, match='not fully certified'):
        buyer.pay(network.ctx('b0'), weak, 's0')
    with pytest.raises(ProtocolError, match='not an owner'):
        stranger.pay(network.ctx('b1'), fund, 's0')
    with pytest.raises(ProtocolError, match='holds no fund'):
        buyer.pay(network.ctx('b0'), 'missing', 's0')


def test_buyer_aborts_on_wrong_commitment_count(network, buyer, fund):
    tid = buyer.pay(network.ctx('b0'), fund, 's0')
    network.outbox.clear()
    commitments = [hash_bytes(bytes([i])) for i in range(network.params.m + 1)]

    buyer.handle(network.ctx('b0'), Message(MessageKind.QUORUM, 's0', 'b0', (tid, hash_bytes(b'n'), commitments)))

    assert network.ctx('b0').events('PAYMENT_ABORTED')[0]['commitments'] == network.params.m + 1
    assert not network.outbox


def test_buyer_signs_a_quorum_once(network, buyer, fund):
    tid = buyer.pay(network.ctx('b0'), fund, 's0')
    network.outbox.clear()
    commitments = [hash_bytes(bytes([i])) for i in range(network.params.m)]
    quorum = Message(MessageKind.QUORUM, 's0', 'b0', (tid, hash_bytes(b'n'), commitments))

    buyer.handle(network.ctx('b0'), quorum)
    buyer.handle(network.ctx('b0'), quorum)

    assert [msg.kind for msg in network.outbox] == [MessageKind.SIGNED_QUORUM]


def test_validator_approves_one_payment_per_fund(network, buyer, fund):
    validator = network.parties['v0']
    ctx = network.ctx('v0')

    validator.handle(ctx, _approve(network, fund, 's0', 'v0', hash_bytes(b'1'), b'N1'))
    validator.handle(ctx, _approve(network, fund, 's1', 'v0', hash_bytes(b'2'), b'N2'))

    first, second = network.outbox
    assert first.kind == MessageKind.VALID
    assert network.registry.verify(b'v0', witness_payload(first.body[0], hash_bytes(b'1')), first.body[2])
    assert second.kind == MessageKind.INVALID
    assert validator.validated_fund == {fund.fid}


def test_validator_rejects_a_commitment_to_another_nonce(network, buyer, fund):
    validator = network.parties['v0']
    msg = _approve(network, fund, 's0', 'v0', hash_bytes(b'1'), b'N1')
    tampered = Message(msg.kind, msg.sender, msg.receiver, msg.body[:3] + (b'N2',))

    validator.handle(network.ctx('v0'), tampered)

    assert network.outbox[0].kind == MessageKind.INVALID
    assert validator.validated_fund == set()


def test_validator_rejects_a_seller_mismatch(network, buyer, fund):
    validator = network.parties['v0']
    msg = _approve(network, fund, 's0', 'v0', hash_bytes(b'1'), b'N1')

    validator.handle(network.ctx('v0'), Message(msg.kind, 's1', 'v0', msg.body))

    assert network.outbox[0].kind == MessageKind.INVALID


def test_malformed_messages_are_dropped(network):
    network.parties['v0'].handle(network.ctx('v0'), Message(MessageKind.VALIDATE, 's0', 'v0', ('garbage',)))

    assert not network.outbox


def test_seller_settlement(network, buyer, fund):
    seller = network.seller('s0', auto_settle=True)
    _pay(network, buyer, fund)

    (settled,) = network.ctx('s0').events('SELLER_SETTLED')
    assert settled['balance'] == 100
    assert settled['signers'] == network.params.n - network.params.f

    (result,) = seller.settled.values()
    assert result.owners == frozenset([b's0'])
    assert is_fully_certified(result, network.params.f, network.registry)


def test_seller_settle_checks_quorum_and_witnesses(network, buyer, fund):
    seller = network.seller('s0')
    _pay(network, buyer, fund)
    (certificate,) = seller.certificates.values()
    validator = network.parties['v0']

    def request(witnesses):
        return SellerSettleRequest(
            client='s0', N_settle=b'settle', tid=certificate.tid, N_s=certificate.N_s, witnesses=witnesses
        )

    witnesses = sorted(certificate.witnesses)
    outsider = next(v for v in network.validators if v.encode('utf-8') not in dict(witnesses))
    forged = (outsider.encode('utf-8'), sign(network.keys[outsider], witness_payload(certificate.tid, certificate.h_s)))

    assert validator.seller_settle_valid(request(witnesses))
    assert not validator.seller_settle_valid(request(witnesses[:3]))
    assert not validator.seller_settle_valid(request(witnesses + [forged]))
    assert not validator.seller_settle_valid(
        SellerSettleRequest('s1', b'settle', certificate.tid, certificate.N_s, witnesses)
    )


def test_buyer_settlement_deducts_certified_payment(network, buyer, fund):
    network.seller('s0', auto_settle=True)
    _pay(network, buyer, fund)

    buyer.settle(network.ctx('b0'), fund)
    network.run()

    (settled,) = network.ctx('b0').events('BUYER_SETTLED')
    assert settled['balance'] == BALANCE - 100
    assert settled['signers'] == network.params.n - 2 * network.params.f
    assert not network.events('SETTLEMENT_ABORTED')


def test_buyer_settlement_without_payments_keeps_balance(network, buyer, fund):
    buyer.settle(network.ctx('b0'), fund)
    network.run()

    (settled,) = network.ctx('b0').events('BUYER_SETTLED')
    assert settled['balance'] == BALANCE
    with pytest.raises(ProtocolError, match='already started'):
        buyer.settle(network.ctx('b0'), fund)
    with pytest.raises(ProtocolError, match='being settled'):
        buyer.pay(network.ctx('b0'), fund, 's0')


def test_concurrent_settlements_pay_both_sides(network, buyer, fund):
    seller = network.seller('s0')
    _pay(network, buyer, fund)

    buyer.settle(network.ctx('b0'), fund)
    seller.settle_all(network.ctx('s0'))
    network.run()

    assert network.ctx('b0').events('BUYER_SETTLED')[0]['balance'] == BALANCE - 100
    assert network.ctx('s0').events('SELLER_SETTLED')[0]['balance'] == 100


def test_settlement_aborts_beyond_k1(network, buyer, fund):
    seller = network.seller('s0')
    _pay(network, buyer, fund)
    (payment,) = seller.payments.values()

    # A second payment approved by validators outside the first quorum, never through the buyer.
    fresh = [v for v in network.validators if v not in payment.members][:4]
    h_s = hash_bytes(b'second payment')
    for validator in fresh:
        network.outbox.append(_approve(network, fund, 's1', validator, h_s, hash_bytes(validator.encode('utf-8'))[:16]))
    network.run()

    buyer.settle(network.ctx('b0'), fund)
    network.run()

    aborted = network.events('SETTLEMENT_ABORTED')
    assert len(aborted) == network.params.n
    assert all(record['transactions'] == 2 for record in aborted)
    assert not network.ctx('b0').events('BUYER_SETTLED')


def test_honest_validators_bound_certificates(make_network):
    params = QuorumParams(n=25, f=3, m=5, k1=1, k2=4)
    network = make_network(params, seed=13)
    fund = network.genesis('f0', 'b0', BALANCE)
    buyer = network.buyer('b0', [fund])
    buyer.on_corrupted()

    for index in range(10):
        network.seller(f's{index}')
        _pay(network, buyer, fund, f's{index}')

    certificates = network.events('CERTIFICATE')
    assert 1 <= len(certificates) <= params.n // witness_threshold(params)


class ValidatorApprovals(RuleBasedStateMachine):
    """One validator's approvals against a model: one per fund, none once a buyer settlement was seen."""

    FUNDS = 3

    def __init__(self):
        super().__init__()
        self.params = QuorumParams(n=7, f=1, m=3, k1=1, k2=3)
        self.registry = KeyRegistry(np.random.default_rng(0))
        self.validators = [f'v{i}' for i in range(self.params.n)]
        keys = {name: self.registry.generate(name) for name in self.validators + ['b0']}
        self.buyer_key = keys['b0']
        self.funds = [genesis_fund(f'f{i}', b'b0', 900, [keys['v0'], keys['v1']]) for i in range(self.FUNDS)]
        self.validator = Validator(keys['v0'], self.params, self.validators, self.registry)
        self.outbox = []
        self.ctx = RecordingContext('v0', np.random.default_rng(1), self.registry, self.outbox)
        self.approved = set()
        self.settled = set()
        self.requests = 0

    @rule(fund=st.integers(0, FUNDS - 1), seller=st.sampled_from(['s0', 's1']), forged=st.booleans())
    def validate(self, fund, seller, forged):
        self.requests += 1
        tid = TransactionId(fund=self.funds[fund], buyer=b'b0', seller=seller.encode('utf-8'))
        h_s = hash_bytes(self.requests.to_bytes(4, 'big'))
        N = h_s[:16]
        commitment = validator_commitment(b'v0', N + b'x' if forged else N)
        sigma = sign(self.buyer_key, approval_payload(tid, h_s, commitment))

        self.outbox.clear()
        self.validator.handle(self.ctx, Message(MessageKind.VALIDATE, seller, 'v0', (tid, h_s, sigma, N)))

        (reply,) = self.outbox
        expected = not forged and fund not in self.approved and fund not in self.settled
        assert reply.kind == (MessageKind.VALID if expected else MessageKind.INVALID)
        if expected:
            self.approved.add(fund)
            assert self.registry.verify(b'v0', witness_payload(tid, h_s), reply.body[2])

    @rule(fund=st.integers(0, FUNDS - 1))
    def settle(self, fund):
        self.outbox.clear()
        self.validator.handle(self.ctx, Message(MessageKind.SETTLE, 'b0', 'v0', (self.funds[fund],)))
        self.settled.add(fund)

        assert self.funds[fund].fid in self.validator.settle

    @invariant()
    def approvals_match_model(self):
        assert self.validator.validated_fund == {self.funds[i].fid for i in self.approved}
        assert self.validator.settle == {self.funds[i].fid for i in self.settled}


ValidatorApprovals.TestCase.settings = settings(max_examples=30, stateful_step_count=15, deadline=None)
TestValidatorApprovals = ValidatorApprovals.TestCase
