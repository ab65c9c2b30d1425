import pytest
from hypothesis import given
from hypothesis import strategies as st

from rollupsim.encoding import (
    decode_block_pubdata,
    decode_pubdata,
    encode_block_pubdata,
    encode_op_padded,
    encode_pubdata,
    is_packable,
    pack_decimal,
    signing_bytes,
    strip_unpublished,
)
from rollupsim.types import (
    CHUNK_TABLE,
    EncodingError,
    Transaction,
    TxKind,
    chunk_count,
    pubdata_size,
)

# Published chunk/byte footprint of every operation type.
EXPECTED_FOOTPRINT = {
    TxKind.NOOP: (1, 10),
    TxKind.DEPOSIT: (6, 45),
    TxKind.TRANSFER_TO_NEW: (6, 40),
    TxKind.WITHDRAW: (6, 47),
    TxKind.TRANSFER: (2, 20),
    TxKind.FULL_EXIT: (11, 85),
    TxKind.CHANGE_PUBKEY: (6, 49),
    TxKind.FORCED_EXIT: (6, 51),
    TxKind.MINT_NFT: (5, 47),
    TxKind.WITHDRAW_NFT: (10, 95),
    TxKind.SWAP: (5, 46),
    TxKind.CHANGE_GROUP: (6, 51),
    TxKind.FULL_CHANGE_GROUP: (11, 89),
}

OPCODES = {
    TxKind.NOOP: 0x00,
    TxKind.DEPOSIT: 0x01,
    TxKind.TRANSFER_TO_NEW: 0x02,
    TxKind.WITHDRAW: 0x03,
    TxKind.TRANSFER: 0x05,
    TxKind.FULL_EXIT: 0x06,
    TxKind.CHANGE_PUBKEY: 0x07,
    TxKind.FORCED_EXIT: 0x08,
    TxKind.MINT_NFT: 0x09,
    TxKind.WITHDRAW_NFT: 0x0A,
    TxKind.SWAP: 0x0B,
    TxKind.CHANGE_GROUP: 0x0C,
    TxKind.FULL_CHANGE_GROUP: 0x0D,
}


def sample_tx(kind: TxKind, group: int = 3) -> Transaction:
    """One representative, encodable transaction of each kind."""
    base = dict(kind=kind, group=group, account=7, nonce=0)
    if kind == TxKind.NOOP:
        return Transaction(kind=kind, group=group)
    if kind == TxKind.DEPOSIT:
        return Transaction(
            kind=kind, group=group, account=0, to_account=7, token=1,
            amount=12345, target=b"\x11" * 20,
        )
    if kind == TxKind.TRANSFER:
        return Transaction(**base, to_account=9, token=1, amount=500, fee=3)
    if kind == TxKind.TRANSFER_TO_NEW:
        return Transaction(
            **base, to_account=9, token=1, amount=500, fee=3, target=b"\x22" * 20
        )
    if kind == TxKind.WITHDRAW:
        return Transaction(
            **base, token=1, amount=700, fee=3, target=b"\x33" * 20
        )
    if kind == TxKind.FULL_EXIT:
        return Transaction(
            kind=kind, group=group, account=7, token=1, amount=900,
            target=b"\x44" * 20,
        )
    if kind == TxKind.CHANGE_PUBKEY:
        return Transaction(**base, new_pubkey=b"\x55" * 32, fee=3)
    if kind == TxKind.FORCED_EXIT:
        return Transaction(
            kind=kind, group=group, account=7, to_account=9, token=1,
            amount=42, fee=3, target=b"\x66" * 20,
        )
    if kind == TxKind.MINT_NFT:
        return Transaction(
            **base, to_account=9, token=2**31 + 5, fee=3, content_hash=b"\x77" * 32
        )
    if kind == TxKind.WITHDRAW_NFT:
        return Transaction(
            **base, token=2**31 + 5, fee=3, target=b"\x88" * 20,
            content_hash=b"\x77" * 32,
        )
    if kind == TxKind.SWAP:
        return Transaction(
            **base, to_account=9, token=0, token_b=1, amount=10, amount_b=20,
            fee=3, nonce_b=4,
        )
    if kind == TxKind.CHANGE_GROUP:
        return Transaction(
            **base, token=1, amount=700, fee=3, target=b"\x99" * 20,
            source_group=group, destination_group=group + 1,
        )
    if kind == TxKind.FULL_CHANGE_GROUP:
        return Transaction(
            kind=kind, group=group, account=7, token=1, amount=900,
            target=b"\xaa" * 20, source_group=group, destination_group=group + 1,
        )
    raise AssertionError(kind)


class TestFootprint:
    def test_every_kind_has_a_layout(self):
        assert set(CHUNK_TABLE) == set(TxKind)

    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_chunk_and_byte_sizes(self, kind):
        chunks, size = EXPECTED_FOOTPRINT[kind]
        assert chunk_count(kind) == chunks
        assert pubdata_size(kind) == size

    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_encoded_length_matches_table(self, kind):
        assert len(encode_pubdata(sample_tx(kind))) == pubdata_size(kind)

    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_opcode_is_first_byte(self, kind):
        assert encode_pubdata(sample_tx(kind))[0] == OPCODES[kind] == kind.value

    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_padded_to_chunk_multiple(self, kind):
        padded = encode_op_padded(sample_tx(kind))
        assert len(padded) == chunk_count(kind) * 10
        assert padded[pubdata_size(kind):] == bytes(len(padded) - pubdata_size(kind))


class TestGoldenBytes:
    def test_transfer_bytes(self):
        # opcode, account(4), to_account(4), token(4), amount(5 packed),
        # fee(2 packed).  500 fits the mantissa directly, so exponent 0.
        tx = sample_tx(TxKind.TRANSFER)
        amount_packed = (500).to_bytes(5, "big")
        fee_packed = (3).to_bytes(2, "big")
        expected = (
            bytes([0x05])
            + (7).to_bytes(4, "big")
            + (9).to_bytes(4, "big")
            + (1).to_bytes(4, "big")
            + amount_packed
            + fee_packed
        )
        assert encode_pubdata(tx) == expected

    def test_noop_is_all_zero(self):
        assert encode_pubdata(sample_tx(TxKind.NOOP)) == bytes(10)


class TestRoundTrip:
    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_round_trip(self, kind):
        tx = sample_tx(kind)
        decoded = decode_pubdata(encode_op_padded(tx), group=tx.group)
        assert decoded == strip_unpublished(tx)

    @given(
        account=st.integers(0, 2**32 - 1),
        to_account=st.integers(0, 2**32 - 1),
        token=st.integers(0, 2**31 - 1),
        mantissa=st.integers(0, 2**35 - 1),
        exponent=st.integers(0, 12),
        fee_mantissa=st.integers(0, 2**11 - 1),
    )
    def test_transfer_round_trip_property(
        self, account, to_account, token, mantissa, exponent, fee_mantissa
    ):
        tx = Transaction(
            kind=TxKind.TRANSFER,
            group=1,
            account=account,
            to_account=to_account,
            token=token,
            amount=mantissa * 10**exponent,
            fee=fee_mantissa,
            nonce=0,
        )
        decoded = decode_pubdata(encode_op_padded(tx), group=1)
        assert decoded.amount == tx.amount
        assert decoded.fee == tx.fee
        assert decoded.account == account and decoded.to_account == to_account

    def test_unknown_opcode_rejected(self):
        with pytest.raises(EncodingError):
            decode_pubdata(bytes([0x04]) + bytes(19), group=0)
        with pytest.raises(EncodingError):
            decode_pubdata(bytes([0xFF]) + bytes(19), group=0)

    def test_truncated_pubdata_rejected(self):
        data = encode_pubdata(sample_tx(TxKind.TRANSFER))
        with pytest.raises(EncodingError):
            decode_pubdata(data[:-5], group=3)


class TestPacking:
    @given(st.integers(0, 2**35 - 1))
    def test_any_small_value_is_packable(self, value):
        assert is_packable(value)
        mantissa, exponent = pack_decimal(value, 35)
        assert mantissa * 10**exponent == value

    def test_unpackable_value(self):
        # 2^35 + 1 has no mantissa/exponent split within 35 bits
        assert not is_packable(2**35 + 1)

    def test_large_round_decimal_is_packable(self):
        assert is_packable(10**12)


class TestBlockStream:
    def test_block_stream_round_trip(self):
        txs = [
            sample_tx(TxKind.TRANSFER),
            sample_tx(TxKind.WITHDRAW),
            sample_tx(TxKind.MINT_NFT),
        ]
        used = sum(chunk_count(tx.kind) for tx in txs)
        txs += [sample_tx(TxKind.NOOP)] * (26 - used)
        stream = encode_block_pubdata(txs, capacity_chunks=26)
        assert len(stream) == 260
        decoded = decode_block_pubdata(stream, group=3)
        published = [
            strip_unpublished(tx) for tx in txs if tx.kind != TxKind.NOOP
        ]
        assert [tx for tx in decoded if tx.kind != TxKind.NOOP] == published

    def test_wrong_total_rejected(self):
        with pytest.raises(EncodingError):
            encode_block_pubdata(
                [sample_tx(TxKind.TRANSFER)] * 14, capacity_chunks=26
            )
        with pytest.raises(EncodingError):
            encode_block_pubdata([sample_tx(TxKind.TRANSFER)], capacity_chunks=26)

    def test_nonzero_padding_rejected(self):
        txs = [sample_tx(TxKind.TRANSFER)] + [sample_tx(TxKind.NOOP)] * 24
        stream = bytearray(encode_block_pubdata(txs, 26))
        stream[-1] = 0x01
        with pytest.raises(EncodingError):
            decode_block_pubdata(bytes(stream), group=3)


class TestSigningBytes:
    def test_group_is_covered(self):
        tx = sample_tx(TxKind.TRANSFER)
        other = Transaction(
            kind=tx.kind, group=tx.group + 1, account=tx.account,
            to_account=tx.to_account, token=tx.token, amount=tx.amount,
            fee=tx.fee, nonce=tx.nonce,
        )
        assert signing_bytes(tx) != signing_bytes(other)

    @pytest.mark.parametrize("kind", list(TxKind), ids=lambda k: k.name)
    def test_distinct_kinds_distinct_bytes(self, kind):
        others = [signing_bytes(sample_tx(k)) for k in TxKind if k != kind]
        assert signing_bytes(sample_tx(kind)) not in others
