"""Core domain types shared by every other module.

Value ranges mirror the on-chain account model: group ids are 16 bits,
account and token indices 32 bits, L1 addresses 20 bytes.  Token ids below
2**31 are fungible; the upper half of the id space is reserved for NFTs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, TypeAlias

GroupId: TypeAlias = int
AccountId: TypeAlias = int
TokenId: TypeAlias = int
L1Address: TypeAlias = bytes

MAX_GROUPS = 1 << 16
MAX_ACCOUNTS = 1 << 32
MAX_TOKENS = 1 << 32
NFT_TOKEN_FLOOR = 1 << 31
ADDRESS_LEN = 20
PUBKEY_LEN = 32


class RollupError(Exception):
    """Base class for all errors raised by the simulator."""


class EncodingError(RollupError):
    """Malformed transaction fields or undecodable pubdata."""


def check_group(value: int) -> int:
    if not 0 <= value < MAX_GROUPS:
        raise ValueError(f"group id out of range: {value}")
    return value


def check_account(value: int) -> int:
    if not 0 <= value < MAX_ACCOUNTS:
        raise ValueError(f"account id out of range: {value}")
    return value


def check_token(value: int) -> int:
    if not 0 <= value < MAX_TOKENS:
        raise ValueError(f"token id out of range: {value}")
    return value


def check_address(value: bytes) -> bytes:
    if len(value) != ADDRESS_LEN:
        raise ValueError(f"L1 address must be {ADDRESS_LEN} bytes, got {len(value)}")
    return value


def is_fungible(token: TokenId) -> bool:
    return token < NFT_TOKEN_FLOOR


class TxKind(IntEnum):
    """Transaction variants; the value doubles as the pubdata opcode."""

    NOOP = 0x00
    DEPOSIT = 0x01
    TRANSFER_TO_NEW = 0x02
    WITHDRAW = 0x03
    TRANSFER = 0x05
    FULL_EXIT = 0x06
    CHANGE_PUBKEY = 0x07
    FORCED_EXIT = 0x08
    MINT_NFT = 0x09
    WITHDRAW_NFT = 0x0A
    SWAP = 0x0B
    CHANGE_GROUP = 0x0C
    FULL_CHANGE_GROUP = 0x0D


# Variants originated on L1 (priority operations); they carry no user
# signature and are authorized by the L1 caller instead.
PRIORITY_KINDS = frozenset(
    {TxKind.DEPOSIT, TxKind.FULL_EXIT, TxKind.FORCED_EXIT, TxKind.FULL_CHANGE_GROUP}
)

# Variants that leave an on-chain effect when their block is executed.
ONCHAIN_KINDS = frozenset(
    {
        TxKind.WITHDRAW,
        TxKind.WITHDRAW_NFT,
        TxKind.FULL_EXIT,
        TxKind.FORCED_EXIT,
        TxKind.CHANGE_GROUP,
        TxKind.FULL_CHANGE_GROUP,
    }
)

# Variants a de-whitelisted user may still submit in a permissioned group:
# withdrawal rights are never revoked.
WITHDRAWAL_KINDS = frozenset(
    {
        TxKind.WITHDRAW,
        TxKind.WITHDRAW_NFT,
        TxKind.FULL_EXIT,
        TxKind.FORCED_EXIT,
        TxKind.CHANGE_GROUP,
        TxKind.FULL_CHANGE_GROUP,
    }
)

ZERO_ADDRESS = b"\x00" * ADDRESS_LEN
ZERO_PUBKEY = b"\x00" * PUBKEY_LEN
ZERO_HASH = b"\x00" * 32


@dataclass(frozen=True, slots=True)
class Transaction:
    """One rollup operation.

    Field usage depends on ``kind``; unused fields stay at their defaults.
    ``account`` is the sender / primary account, ``to_account`` the
    counterparty or target.  ``source_group``/``destination_group`` are only
    set for the two cross-group variants and must differ.
    """

    kind: TxKind
    group: GroupId = 0
    account: AccountId = 0
    to_account: AccountId = 0
    token: TokenId = 0
    token_b: TokenId = 0
    amount: int = 0
    amount_b: int = 0
    fee: int = 0
    nonce: int = 0
    nonce_b: int = 0
    target: L1Address = ZERO_ADDRESS
    new_pubkey: bytes = ZERO_PUBKEY
    content_hash: bytes = ZERO_HASH
    source_group: GroupId = 0
    destination_group: GroupId = 0

    def validate(self) -> None:
        check_group(self.group)
        check_account(self.account)
        check_account(self.to_account)
        check_token(self.token)
        check_token(self.token_b)
        check_address(self.target)
        if len(self.new_pubkey) != PUBKEY_LEN:
            raise EncodingError("new_pubkey must be 32 bytes")
        if len(self.content_hash) != 32:
            raise EncodingError("content_hash must be 32 bytes")
        if self.amount < 0 or self.amount_b < 0 or self.fee < 0:
            raise EncodingError("amounts and fees must be non-negative")
        if self.amount >= 1 << 128 or self.amount_b >= 1 << 128:
            raise EncodingError("amount exceeds 128 bits")
        if self.fee >= 1 << 64:
            raise EncodingError("fee exceeds 64 bits")
        if self.kind in (TxKind.CHANGE_GROUP, TxKind.FULL_CHANGE_GROUP):
            check_group(self.source_group)
            check_group(self.destination_group)
            if self.source_group == self.destination_group:
                raise EncodingError("source and destination group must differ")
            if self.source_group != self.group:
                raise EncodingError("source_group must equal the executing group")

    def with_amount(self, amount: int) -> "Transaction":
        return replace(self, amount=amount)


@dataclass(frozen=True, slots=True)
class SignedTransaction:
    """A transaction plus the signature(s) authorizing it.

    The signature covers the canonical serialization of the transaction
    including the group field.  Swap carries a second signature from the
    counterparty; priority operations carry none.
    """

    tx: Transaction
    signer_pubkey: bytes = ZERO_PUBKEY
    signature: bytes = b""
    second_signer_pubkey: bytes = ZERO_PUBKEY
    second_signature: bytes = b""


@dataclass(frozen=True, slots=True)
class ChunkLayout:
    chunks: int
    pubdata_bytes: int


CHUNK_BYTES = 10

# Per-variant chunk budget and pubdata size.  The chunk count is a table
# value, not ceil(bytes/10): TransferToNew occupies 6 chunks for 40 bytes.
CHUNK_TABLE: dict[TxKind, ChunkLayout] = {
    TxKind.NOOP: ChunkLayout(1, 10),
    TxKind.DEPOSIT: ChunkLayout(6, 45),
    TxKind.TRANSFER_TO_NEW: ChunkLayout(6, 40),
    TxKind.WITHDRAW: ChunkLayout(6, 47),
    TxKind.TRANSFER: ChunkLayout(2, 20),
    TxKind.FULL_EXIT: ChunkLayout(11, 85),
    TxKind.CHANGE_PUBKEY: ChunkLayout(6, 49),
    TxKind.FORCED_EXIT: ChunkLayout(6, 51),
    TxKind.MINT_NFT: ChunkLayout(5, 47),
    TxKind.WITHDRAW_NFT: ChunkLayout(10, 95),
    TxKind.SWAP: ChunkLayout(5, 46),
    TxKind.CHANGE_GROUP: ChunkLayout(6, 51),
    TxKind.FULL_CHANGE_GROUP: ChunkLayout(11, 89),
}


def chunk_count(kind: TxKind) -> int:
    return CHUNK_TABLE[kind].chunks


def pubdata_size(kind: TxKind) -> int:
    return CHUNK_TABLE[kind].pubdata_bytes


class OnchainOpKind(IntEnum):
    WITHDRAW_TO = 1
    WITHDRAW_NFT_TO = 2
    FULL_EXIT_TO = 3
    FORCED_EXIT_TO = 4
    CHANGE_GROUP_TO = 5
    FULL_CHANGE_GROUP_TO = 6


CROSS_GROUP_OP_KINDS = frozenset(
    {OnchainOpKind.CHANGE_GROUP_TO, OnchainOpKind.FULL_CHANGE_GROUP_TO}
)


@dataclass(frozen=True, slots=True)
class OnchainOp:
    """On-chain effect recorded at commit and applied at execute."""

    kind: OnchainOpKind
    owner: L1Address
    token: TokenId
    amount: int
    destination_group: Optional[GroupId] = None


@dataclass(slots=True)
class Block:
    """One block of a single group, padded to a fixed chunk capacity."""

    group: GroupId
    number: int
    transactions: list[SignedTransaction] = field(default_factory=list)
    capacity_chunks: int = 26
    old_root: bytes = b""
    new_root: bytes = b""
    pubdata: bytes = b""

    def used_chunks(self) -> int:
        return sum(chunk_count(stx.tx.kind) for stx in self.transactions)
