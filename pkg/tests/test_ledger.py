import numpy as np
import pytest
from hypothesis import given, strategies as st

from pyscora_quorum.crypto import KeyRegistry, hash_bytes
from pyscora_quorum.ledger import (
    Fund,
    PaymentCertificate,
    TransactionId,
    buyer_settled_fund_id,
    decode,
    derive_payment_fund,
    derive_settled_fund,
    encode,
    genesis_fund,
    is_fully_certified,
    payment_fund_id,
    seller_settled_fund_id,
    valid_validators,
    validate_fund,
)
from pyscora_quorum.utils import EncodingError, ProtocolError

F = 3


@pytest.fixture
def keys():
    registry = KeyRegistry(np.random.default_rng(5))
    validators = [registry.generate(f'v{i}') for i in range(6)]

    return registry, validators


@pytest.fixture
def fund(keys):
    _, validators = keys

    return genesis_fund('f0', b'b0', 2900, validators[: F + 1])


wire_values = st.recursive(
    st.one_of(st.binary(max_size=20), st.text(max_size=20), st.integers(), st.none()),
    lambda children: st.lists(children, max_size=5),
    max_leaves=20,
)


@given(wire_values)
def test_decode_inverts_encode(value):
    assert decode(encode(value)) == value


def test_tuples_encode_as_lists():
    assert decode(encode((b'a', ('x', 1)))) == [b'a', ['x', 1]]


def test_booleans_have_no_encoding():
    with pytest.raises(EncodingError):
        encode(True)
    with pytest.raises(EncodingError):
        encode([1, False])


@pytest.mark.parametrize('data', [b'', b'b\x00\x00', b'b\x00\x00\x00\x05ab', b'z\x00\x00\x00\x00', 'text'])
def test_decode_rejects_malformed_input(data):
    with pytest.raises(EncodingError):
        decode(data)


def test_decode_rejects_trailing_bytes():
    with pytest.raises(EncodingError, match='trailing'):
        decode(encode(b'abc') + b'\x00')


def test_fund_encoding_ignores_certificate(fund):
    bare = Fund(fid=fund.fid, fbl=fund.fbl, owners=fund.owners)

    assert bare.encoding() == fund.encoding()
    assert bare == fund


def test_fund_owners_are_canonical():
    first = Fund(fid=b'x', fbl=1, owners=[b'b', b'a'])
    second = Fund(fid=b'x', fbl=1, owners=[b'a', b'b'])

    assert first.encoding() == second.encoding()


def test_negative_balance_is_rejected():
    with pytest.raises(ProtocolError):
        Fund(fid=b'x', fbl=-1, owners=[b'a'])


def test_genesis_fund_is_fully_certified(keys, fund):
    registry, _ = keys

    assert is_fully_certified(fund, F, registry)
    assert not is_fully_certified(fund, F + 1, registry)


def test_certificate_survives_the_wire(keys, fund):
    registry, _ = keys
    restored = Fund.from_wire(decode(encode(fund)))

    assert restored == fund
    assert is_fully_certified(restored, F, registry)


def test_duplicate_signers_count_once(keys):
    registry, validators = keys
    bare = Fund(fid=b'fund', fbl=10, owners=[b'b0'])
    signatures = [validate_fund(key, bare) for key in validators[:F]]

    certified = bare.with_certificate(signatures + signatures[:2])

    assert len(valid_validators(certified, registry)) == F
    assert not is_fully_certified(certified, F, registry)


def test_signatures_over_other_content_do_not_count(keys, fund):
    registry, validators = keys
    other = Fund(fid=fund.fid, fbl=fund.fbl + 1, owners=fund.owners)
    moved = other.with_certificate(validate_fund(key, fund) for key in validators[: F + 1])

    assert valid_validators(moved, registry) == frozenset()


def test_payment_fund_derivation(fund):
    tid = TransactionId(fund=fund, buyer=b'b0', seller=b's0')
    payment = derive_payment_fund(tid, b'nonce-1', fund.fbl, 29)

    assert payment.fbl == 100
    assert payment.owners == frozenset([b's0'])
    assert payment.fid == payment_fund_id(tid, b'nonce-1')
    assert derive_payment_fund(tid, b'nonce-1', fund.fbl, 29) == payment
    assert derive_payment_fund(tid, b'nonce-2', fund.fbl, 29).fid != payment.fid


def test_settled_fund_ids_differ_by_side(fund):
    assert derive_settled_fund(fund, buyer_side=True) == buyer_settled_fund_id(fund.fid) == hash_bytes(fund.fid)
    assert derive_settled_fund(fund) == seller_settled_fund_id(fund.fid)
    assert derive_settled_fund(fund) != derive_settled_fund(fund, buyer_side=True)


def test_payment_certificate_wire_form(fund):
    tid = TransactionId(fund=fund, buyer=b'b0', seller=b's0')
    certificate = PaymentCertificate(
        tid=tid, N_s=b'n', h_s=hash_bytes(b'n'), witnesses=frozenset([(b'v1', b'sig1'), (b'v0', b'sig0')])
    )

    restored = PaymentCertificate.from_wire(decode(encode(certificate)))

    assert restored.witnesses == certificate.witnesses
    assert restored.tid.encoding() == tid.encoding()


@pytest.mark.parametrize('wire', [[], [b'fid', -1, [b'a'], []], [b'fid', b'1', [b'a'], []], [b'fid', 1, [2], []]])
def test_malformed_fund_wire(wire):
    with pytest.raises((EncodingError, ProtocolError)):
        Fund.from_wire(wire)
