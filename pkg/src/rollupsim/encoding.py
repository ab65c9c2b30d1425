"""Canonical byte encodings: pubdata, packed amounts, signing payloads.

Every variant encodes to the exact byte count of its chunk-table entry.
Layout convention: a 1-byte opcode, then fixed-width big-endian fields
(account ids 4 bytes, token ids 4 bytes, full amounts 16 bytes, packed
amounts 5 bytes, packed fees 2 bytes, L1 addresses 20 bytes, group ids
2 bytes); any shortfall against the table total is zero-filled reserved
bytes at the end.

Inside a block, each operation's pubdata is zero-padded to its chunk
budget (10 bytes per chunk), so block pubdata length is exactly
10 * capacity_chunks.
"""

from __future__ import annotations

from dataclasses import replace

from .types import (
    CHUNK_BYTES,
    EncodingError,
    GroupId,
    Transaction,
    TxKind,
    chunk_count,
    pubdata_size,
)

AMOUNT_MANTISSA_BITS = 35
FEE_MANTISSA_BITS = 11
EXPONENT_BITS = 5


def pack_decimal(value: int, mantissa_bits: int) -> tuple[int, int]:
    """Split ``value`` into (mantissa, base-10 exponent), exact or error."""
    if value < 0:
        raise EncodingError("cannot pack negative value")
    exponent = 0
    mantissa = value
    while mantissa >= 1 << mantissa_bits:
        if mantissa % 10 != 0:
            raise EncodingError(f"value {value} is not exactly packable")
        mantissa //= 10
        exponent += 1
    if exponent >= 1 << EXPONENT_BITS:
        raise EncodingError(f"value {value} exponent overflow")
    return mantissa, exponent


def is_packable(value: int, mantissa_bits: int = AMOUNT_MANTISSA_BITS) -> bool:
    try:
        pack_decimal(value, mantissa_bits)
    except EncodingError:
        return False
    return True


def _pack_amount(value: int) -> bytes:
    mantissa, exponent = pack_decimal(value, AMOUNT_MANTISSA_BITS)
    return ((exponent << AMOUNT_MANTISSA_BITS) | mantissa).to_bytes(5, "big")


def _unpack_amount(data: bytes) -> int:
    raw = int.from_bytes(data, "big")
    mantissa = raw & ((1 << AMOUNT_MANTISSA_BITS) - 1)
    exponent = raw >> AMOUNT_MANTISSA_BITS
    return mantissa * 10**exponent


def _pack_fee(value: int) -> bytes:
    mantissa, exponent = pack_decimal(value, FEE_MANTISSA_BITS)
    return ((exponent << FEE_MANTISSA_BITS) | mantissa).to_bytes(2, "big")


def _unpack_fee(data: bytes) -> int:
    raw = int.from_bytes(data, "big")
    mantissa = raw & ((1 << FEE_MANTISSA_BITS) - 1)
    exponent = raw >> FEE_MANTISSA_BITS
    return mantissa * 10**exponent


def _u(value: int, width: int) -> bytes:
    return value.to_bytes(width, "big")


def encode_pubdata(tx: Transaction) -> bytes:
    """Serialize one transaction to its canonical on-chain summary."""
    tx.validate()
    k = tx.kind
    out = bytearray([k])
    if k == TxKind.NOOP:
        pass
    elif k == TxKind.DEPOSIT:
        out += _u(tx.to_account, 4) + _u(tx.token, 4) + _u(tx.amount, 16) + tx.target
    elif k == TxKind.TRANSFER_TO_NEW:
        out += (
            _u(tx.account, 4)
            + _u(tx.token, 4)
            + _pack_amount(tx.amount)
            + tx.target
            + _u(tx.to_account, 4)
            + _pack_fee(tx.fee)
        )
    elif k == TxKind.WITHDRAW:
        out += (
            _u(tx.account, 4)
            + _u(tx.token, 4)
            + _u(tx.amount, 16)
            + _pack_fee(tx.fee)
            + tx.target
        )
    elif k == TxKind.TRANSFER:
        out += (
            _u(tx.account, 4)
            + _u(tx.to_account, 4)
            + _u(tx.token, 4)
            + _pack_amount(tx.amount)
            + _pack_fee(tx.fee)
        )
    elif k == TxKind.FULL_EXIT:
        out += _u(tx.account, 4) + tx.target + _u(tx.token, 4) + _u(tx.amount, 16)
    elif k == TxKind.CHANGE_PUBKEY:
        out += _u(tx.account, 4) + tx.new_pubkey + _u(tx.nonce, 4) + _pack_fee(tx.fee)
    elif k == TxKind.FORCED_EXIT:
        out += _u(tx.to_account, 4) + _u(tx.token, 4) + _u(tx.amount, 16) + tx.target
    elif k == TxKind.MINT_NFT:
        out += (
            _u(tx.account, 4)
            + _u(tx.to_account, 4)
            + _u(tx.token, 4)
            + tx.content_hash
            + _pack_fee(tx.fee)
        )
    elif k == TxKind.WITHDRAW_NFT:
        out += (
            _u(tx.account, 4)
            + _u(tx.token, 4)
            + tx.content_hash
            + tx.target
            + _pack_fee(tx.fee)
        )
    elif k == TxKind.SWAP:
        out += (
            _u(tx.account, 4)
            + _u(tx.to_account, 4)
            + _u(tx.token, 4)
            + _u(tx.token_b, 4)
            + _pack_amount(tx.amount)
            + _pack_amount(tx.amount_b)
            + _pack_fee(tx.fee)
        )
    elif k == TxKind.CHANGE_GROUP:
        out += (
            _u(tx.account, 4)
            + _u(tx.token, 4)
            + _u(tx.amount, 16)
            + _pack_fee(tx.fee)
            + tx.target
            + _u(tx.source_group, 2)
            + _u(tx.destination_group, 2)
        )
    elif k == TxKind.FULL_CHANGE_GROUP:
        out += (
            _u(tx.account, 4)
            + tx.target
            + _u(tx.token, 4)
            + _u(tx.amount, 16)
            + b"\x00" * 40
            + _u(tx.source_group, 2)
            + _u(tx.destination_group, 2)
        )
    else:  # pragma: no cover
        raise EncodingError(f"unknown kind {k}")

    want = pubdata_size(k)
    if len(out) > want:
        raise EncodingError(f"{k.name} encoding overflows table size")
    out += b"\x00" * (want - len(out))
    return bytes(out)


def decode_pubdata(data: bytes, group: GroupId = 0) -> Transaction:
    """Inverse of :func:`encode_pubdata` for a single operation.

    ``group`` fills the group field for variants that do not publish it;
    the cross-group variants carry their groups in the pubdata itself.
    """
    if not data:
        raise EncodingError("empty pubdata")
    try:
        k = TxKind(data[0])
    except ValueError:
        raise EncodingError(f"unknown opcode 0x{data[0]:02X}") from None
    want = pubdata_size(k)
    if len(data) < want:
        raise EncodingError(f"truncated pubdata for {k.name}")
    body = data[1:want]

    def u(offset: int, width: int) -> int:
        return int.from_bytes(body[offset : offset + width], "big")

    if k == TxKind.NOOP:
        if any(data[:want]):
            raise EncodingError("noop pubdata must be all zero")
        return Transaction(kind=k, group=group)
    if k == TxKind.DEPOSIT:
        return Transaction(
            kind=k, group=group, to_account=u(0, 4), token=u(4, 4),
            amount=u(8, 16), target=bytes(body[24:44]),
        )
    if k == TxKind.TRANSFER_TO_NEW:
        return Transaction(
            kind=k, group=group, account=u(0, 4), token=u(4, 4),
            amount=_unpack_amount(body[8:13]), target=bytes(body[13:33]),
            to_account=u(33, 4), fee=_unpack_fee(body[37:39]),
        )
    if k == TxKind.WITHDRAW:
        return Transaction(
            kind=k, group=group, account=u(0, 4), token=u(4, 4),
            amount=u(8, 16), fee=_unpack_fee(body[24:26]),
            target=bytes(body[26:46]),
        )
    if k == TxKind.TRANSFER:
        return Transaction(
            kind=k, group=group, account=u(0, 4), to_account=u(4, 4),
            token=u(8, 4), amount=_unpack_amount(body[12:17]),
            fee=_unpack_fee(body[17:19]),
        )
    if k == TxKind.FULL_EXIT:
        return Transaction(
            kind=k, group=group, account=u(0, 4), target=bytes(body[4:24]),
            token=u(24, 4), amount=u(28, 16),
        )
    if k == TxKind.CHANGE_PUBKEY:
        return Transaction(
            kind=k, group=group, account=u(0, 4), new_pubkey=bytes(body[4:36]),
            nonce=u(36, 4), fee=_unpack_fee(body[40:42]),
        )
    if k == TxKind.FORCED_EXIT:
        return Transaction(
            kind=k, group=group, to_account=u(0, 4), token=u(4, 4),
            amount=u(8, 16), target=bytes(body[24:44]),
        )
    if k == TxKind.MINT_NFT:
        return Transaction(
            kind=k, group=group, account=u(0, 4), to_account=u(4, 4),
            token=u(8, 4), content_hash=bytes(body[12:44]),
            fee=_unpack_fee(body[44:46]),
        )
    if k == TxKind.WITHDRAW_NFT:
        return Transaction(
            kind=k, group=group, account=u(0, 4), token=u(4, 4),
            content_hash=bytes(body[8:40]), target=bytes(body[40:60]),
            fee=_unpack_fee(body[60:62]),
        )
    if k == TxKind.SWAP:
        return Transaction(
            kind=k, group=group, account=u(0, 4), to_account=u(4, 4),
            token=u(8, 4), token_b=u(12, 4),
            amount=_unpack_amount(body[16:21]),
            amount_b=_unpack_amount(body[21:26]),
            fee=_unpack_fee(body[26:28]),
        )
    if k == TxKind.CHANGE_GROUP:
        src, dst = u(46, 2), u(48, 2)
        return Transaction(
            kind=k, group=src, account=u(0, 4), token=u(4, 4),
            amount=u(8, 16), fee=_unpack_fee(body[24:26]),
            target=bytes(body[26:46]), source_group=src, destination_group=dst,
        )
    if k == TxKind.FULL_CHANGE_GROUP:
        src, dst = u(84, 2), u(86, 2)
        return Transaction(
            kind=k, group=src, account=u(0, 4), target=bytes(body[4:24]),
            token=u(24, 4), amount=u(28, 16),
            source_group=src, destination_group=dst,
        )
    raise EncodingError(f"unhandled kind {k}")  # pragma: no cover


def strip_unpublished(tx: Transaction) -> Transaction:
    """Zero the fields the on-chain summary does not carry (nonces; for
    forced exits also the L1 initiator's account and fee)."""
    if tx.kind == TxKind.CHANGE_PUBKEY:
        return replace(tx, nonce_b=0)
    if tx.kind == TxKind.FORCED_EXIT:
        return replace(tx, nonce=0, nonce_b=0, account=0, fee=0)
    return replace(tx, nonce=0, nonce_b=0)


def encode_op_padded(tx: Transaction) -> bytes:
    """Pubdata of one op zero-padded to its chunk budget."""
    raw = encode_pubdata(tx)
    return raw + b"\x00" * (chunk_count(tx.kind) * CHUNK_BYTES - len(raw))


def encode_block_pubdata(txs: list[Transaction], capacity_chunks: int) -> bytes:
    """Concatenated chunk-padded pubdata of a full block."""
    out = b"".join(encode_op_padded(tx) for tx in txs)
    want = capacity_chunks * CHUNK_BYTES
    if len(out) != want:
        raise EncodingError(
            f"block pubdata is {len(out)} bytes, capacity wants {want}"
        )
    return out


def decode_block_pubdata(data: bytes, group: GroupId = 0) -> list[Transaction]:
    """Split block pubdata back into its operations (padding skipped)."""
    txs: list[Transaction] = []
    cursor = 0
    while cursor < len(data):
        tx = decode_pubdata(data[cursor:], group=group)
        stride = chunk_count(tx.kind) * CHUNK_BYTES
        pad = data[cursor + pubdata_size(tx.kind) : cursor + stride]
        if any(pad):
            raise EncodingError("nonzero chunk padding")
        txs.append(tx)
        cursor += stride
    if cursor != len(data):
        raise EncodingError("trailing bytes in block pubdata")
    return txs


def signing_bytes(tx: Transaction) -> bytes:
    """Full canonical serialization covered by user signatures.

    Unlike pubdata this includes every field, in particular the group id,
    so re-signing is required for any field change.
    """
    return b"".join(
        (
            _u(tx.kind, 1),
            _u(tx.group, 2),
            _u(tx.account, 4),
            _u(tx.to_account, 4),
            _u(tx.token, 4),
            _u(tx.token_b, 4),
            _u(tx.amount, 16),
            _u(tx.amount_b, 16),
            _u(tx.fee, 8),
            _u(tx.nonce, 4),
            _u(tx.nonce_b, 4),
            tx.target,
            tx.new_pubkey,
            tx.content_hash,
            _u(tx.source_group, 2),
            _u(tx.destination_group, 2),
        )
    )
