"""Per-group account state and the state-transition rules of every
transaction variant.

The account set of one group lives in a depth-32 sparse Merkle tree; each
account leaf commits to its own depth-32 balance subtree, giving the
overall depth-64 structure.  Roots are pure functions of the final leaf
contents, so replaying the published pubdata reproduces them exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

from . import smt
from .encoding import decode_block_pubdata, encode_pubdata
from .signing import verify_signature
from .types import (
    NFT_TOKEN_FLOOR,
    PRIORITY_KINDS,
    ZERO_ADDRESS,
    ZERO_PUBKEY,
    AccountId,
    GroupId,
    OnchainOp,
    OnchainOpKind,
    RollupError,
    SignedTransaction,
    TokenId,
    Transaction,
    TxKind,
    is_fungible,
)

FEE_ACCOUNT = 0

_BALANCE_LEAF_TAG = b"\x02"
_ACCOUNT_LEAF_TAG = b"\x03"

_DEFAULT_BALANCE_LEAF = smt.H(_BALANCE_LEAF_TAG + (0).to_bytes(16, "big"))
_BALANCE_DEFAULTS = smt.default_hashes(_DEFAULT_BALANCE_LEAF)
EMPTY_BALANCE_ROOT = _BALANCE_DEFAULTS[0]


class StateError(RollupError):
    """A transaction violated the state-transition rules."""


class InsufficientBalance(StateError):
    pass


class NonceMismatch(StateError):
    pass


class BadSignature(StateError):
    pass


class UnknownAccount(StateError):
    pass


class AccountExists(StateError):
    pass


def balance_leaf_hash(amount: int) -> bytes:
    if amount == 0:
        return _DEFAULT_BALANCE_LEAF
    return smt.H(_BALANCE_LEAF_TAG + amount.to_bytes(16, "big"))


@dataclass(slots=True)
class AccountLeaf:
    nonce: int = 0
    l1_address: bytes = ZERO_ADDRESS
    l2_pubkey: bytes = ZERO_PUBKEY  # all-zero means unset
    balances: dict[TokenId, int] = field(default_factory=dict)

    def balance(self, token: TokenId) -> int:
        return self.balances.get(token, 0)

    def credit(self, token: TokenId, amount: int) -> None:
        if amount == 0:
            return
        self.balances[token] = self.balance(token) + amount

    def debit(self, token: TokenId, amount: int) -> None:
        have = self.balance(token)
        if have < amount:
            raise InsufficientBalance(
                f"balance {have} of token {token} below required {amount}"
            )
        remaining = have - amount
        if remaining:
            self.balances[token] = remaining
        else:
            self.balances.pop(token, None)

    def balance_root(self) -> bytes:
        tree = smt.SparseTree.__new__(smt.SparseTree)
        tree.defaults = _BALANCE_DEFAULTS
        tree.leaves = {
            token: balance_leaf_hash(amount)
            for token, amount in self.balances.items()
            if amount
        }
        return tree.root()

    def leaf_hash(self) -> bytes:
        return smt.H(
            _ACCOUNT_LEAF_TAG
            + self.nonce.to_bytes(4, "big")
            + self.l1_address
            + self.l2_pubkey
            + self.balance_root()
        )

    def is_default(self) -> bool:
        return (
            self.nonce == 0
            and self.l1_address == ZERO_ADDRESS
            and self.l2_pubkey == ZERO_PUBKEY
            and not self.balances
        )

    def copy(self) -> "AccountLeaf":
        return AccountLeaf(
            nonce=self.nonce,
            l1_address=self.l1_address,
            l2_pubkey=self.l2_pubkey,
            balances=dict(self.balances),
        )


DEFAULT_ACCOUNT_LEAF_HASH = AccountLeaf().leaf_hash()
_ACCOUNT_DEFAULTS = smt.default_hashes(DEFAULT_ACCOUNT_LEAF_HASH)


def empty_root() -> bytes:
    """Root of a group with no accounts ever touched."""
    return _ACCOUNT_DEFAULTS[0]


@dataclass(slots=True)
class GroupState:
    """Mutable account state of one tenant rollup."""

    group: GroupId
    accounts: dict[AccountId, AccountLeaf] = field(default_factory=dict)
    next_account_index: AccountId = 1  # index 0 is the validator fee account
    next_nft_id: TokenId = NFT_TOKEN_FLOOR
    address_index: dict[bytes, AccountId] = field(default_factory=dict)

    def account(self, index: AccountId) -> AccountLeaf:
        try:
            return self.accounts[index]
        except KeyError:
            raise UnknownAccount(f"account {index} does not exist") from None

    def ensure_account(self, index: AccountId, l1_address: bytes) -> AccountLeaf:
        leaf = self.accounts.get(index)
        if leaf is None:
            leaf = AccountLeaf(l1_address=l1_address)
            self.accounts[index] = leaf
            if l1_address != ZERO_ADDRESS:
                self.address_index.setdefault(l1_address, index)
            if index >= self.next_account_index:
                self.next_account_index = index + 1
        return leaf

    def account_of_address(self, l1_address: bytes) -> Optional[AccountId]:
        return self.address_index.get(l1_address)

    def allocate_account(self, l1_address: bytes) -> AccountId:
        index = self.next_account_index
        self.next_account_index += 1
        self.ensure_account(index, l1_address)
        return index

    def fee_account(self) -> AccountLeaf:
        return self.ensure_account(FEE_ACCOUNT, ZERO_ADDRESS)

    def total_balance(self) -> int:
        """Sum of all fungible balances; minted NFT units carry no locked
        value and are excluded from conservation accounting."""
        return sum(
            amount
            for leaf in self.accounts.values()
            for token, amount in leaf.balances.items()
            if is_fungible(token)
        )

    def copy(self) -> "GroupState":
        return GroupState(
            group=self.group,
            accounts={i: leaf.copy() for i, leaf in self.accounts.items()},
            next_account_index=self.next_account_index,
            next_nft_id=self.next_nft_id,
            address_index=dict(self.address_index),
        )


def state_root(state: GroupState) -> bytes:
    tree = smt.SparseTree.__new__(smt.SparseTree)
    tree.defaults = _ACCOUNT_DEFAULTS
    tree.leaves = {}
    for index, leaf in state.accounts.items():
        h = leaf.leaf_hash()
        if h != DEFAULT_ACCOUNT_LEAF_HASH:
            tree.leaves[index] = h
    return tree.root()


def prove_inclusion(
    state: GroupState, account: AccountId, token: Optional[TokenId] = None
):
    """Merkle path for an account leaf, or for one balance inside it.

    Returns ``(path, leaf_hash)`` for the account tree when ``token`` is
    None, else ``(account_path, account_leaf_hash, balance_path,
    balance_leaf_hash)`` so both levels can be checked.
    """
    tree = smt.SparseTree(DEFAULT_ACCOUNT_LEAF_HASH)
    for index, leaf in state.accounts.items():
        tree.set_leaf(index, leaf.leaf_hash())
    account_leaf = state.accounts.get(account, AccountLeaf())
    account_path = tree.prove(account)
    if token is None:
        return account_path, account_leaf.leaf_hash()
    balance_tree = smt.SparseTree.__new__(smt.SparseTree)
    balance_tree.defaults = _BALANCE_DEFAULTS
    balance_tree.leaves = {
        t: balance_leaf_hash(a) for t, a in account_leaf.balances.items() if a
    }
    return (
        account_path,
        account_leaf.leaf_hash(),
        balance_tree.prove(token),
        balance_leaf_hash(account_leaf.balance(token)),
    )


@dataclass(frozen=True, slots=True)
class ApplyContext:
    """How a transaction is being applied.

    ``check_signatures`` is off for pubdata replay (signatures are never
    published).  ``fill`` is on when the validator first executes a tx and
    must resolve full-exit amounts and fresh NFT ids; replay reuses the
    published values instead.
    """

    check_signatures: bool = True
    fill: bool = True


@dataclass(frozen=True, slots=True)
class ApplyResult:
    tx: Transaction  # effective transaction, amounts/ids resolved
    pubdata: bytes
    onchain_op: Optional[OnchainOp]


def _fee_token(tx: Transaction) -> TokenId:
    # NFT operations pay fees in token 0; fungible ops pay in their token.
    if tx.kind in (TxKind.MINT_NFT, TxKind.WITHDRAW_NFT):
        return 0
    return tx.token


def _check_signed(state: GroupState, stx: SignedTransaction, ctx: ApplyContext) -> None:
    tx = stx.tx
    if not ctx.check_signatures:
        return
    if not verify_signature(stx):
        raise BadSignature(f"{tx.kind.name}: signature does not verify")
    if tx.kind == TxKind.CHANGE_PUBKEY:
        if stx.signer_pubkey != tx.new_pubkey:
            raise BadSignature("ChangePubKey must be signed by the new key")
        return
    sender = state.account(tx.account)
    if sender.l2_pubkey != stx.signer_pubkey:
        raise BadSignature("signer is not the account owner")
    if tx.kind == TxKind.SWAP:
        party_b = state.account(tx.to_account)
        if party_b.l2_pubkey != stx.second_signer_pubkey:
            raise BadSignature("second signer is not the counterparty")


def _check_nonce(leaf: AccountLeaf, expected: int, ctx: ApplyContext) -> None:
    if ctx.check_signatures and leaf.nonce != expected:
        raise NonceMismatch(f"nonce is {leaf.nonce}, tx carries {expected}")


def _pay_fee(state: GroupState, sender: AccountLeaf, tx: Transaction) -> None:
    if tx.fee == 0:
        return
    token = _fee_token(tx)
    sender.debit(token, tx.fee)
    state.fee_account().credit(token, tx.fee)


def apply_transaction(
    state: GroupState, stx: SignedTransaction, ctx: ApplyContext = ApplyContext()
) -> ApplyResult:
    """Apply one transaction in place; returns the effective transaction,
    its pubdata, and the on-chain effect if any.  Raises StateError (and
    leaves the state unmodified) on any rule violation."""
    tx = stx.tx
    tx.validate()
    if tx.group != state.group:
        raise StateError(
            f"tx group {tx.group} executed against group {state.group}"
        )
    if tx.kind not in PRIORITY_KINDS and tx.kind != TxKind.NOOP:
        _check_signed(state, stx, ctx)

    # Work on a scratch copy so failures cannot leave partial effects.
    scratch = state.copy()
    effective, onchain = _apply_effects(scratch, tx, ctx)
    state.accounts = scratch.accounts
    state.next_account_index = scratch.next_account_index
    state.next_nft_id = scratch.next_nft_id
    state.address_index = scratch.address_index
    return ApplyResult(
        tx=effective, pubdata=encode_pubdata(effective), onchain_op=onchain
    )


def _apply_effects(
    state: GroupState, tx: Transaction, ctx: ApplyContext
) -> tuple[Transaction, Optional[OnchainOp]]:
    k = tx.kind

    if k == TxKind.NOOP:
        return tx, None

    if k == TxKind.DEPOSIT:
        leaf = state.ensure_account(tx.to_account, tx.target)
        leaf.credit(tx.token, tx.amount)
        return tx, None

    if k == TxKind.TRANSFER_TO_NEW:
        sender = state.account(tx.account)
        _check_nonce(sender, tx.nonce, ctx)
        if tx.to_account in state.accounts:
            raise AccountExists(f"account {tx.to_account} already exists")
        sender.debit(tx.token, tx.amount)
        _pay_fee(state, sender, tx)
        sender.nonce += 1
        state.ensure_account(tx.to_account, tx.target).credit(tx.token, tx.amount)
        return tx, None

    if k == TxKind.TRANSFER:
        sender = state.account(tx.account)
        recipient = state.account(tx.to_account)  # must pre-exist
        _check_nonce(sender, tx.nonce, ctx)
        sender.debit(tx.token, tx.amount)
        _pay_fee(state, sender, tx)
        sender.nonce += 1
        recipient.credit(tx.token, tx.amount)
        return tx, None

    if k == TxKind.WITHDRAW:
        sender = state.account(tx.account)
        _check_nonce(sender, tx.nonce, ctx)
        sender.debit(tx.token, tx.amount)
        _pay_fee(state, sender, tx)
        sender.nonce += 1
        op = OnchainOp(OnchainOpKind.WITHDRAW_TO, tx.target, tx.token, tx.amount)
        return tx, op

    if k == TxKind.FULL_EXIT:
        leaf = state.accounts.get(tx.account)
        amount = tx.amount
        if ctx.fill:
            amount = leaf.balance(tx.token) if leaf else 0
        if leaf is not None:
            leaf.debit(tx.token, amount)
        elif amount:
            raise InsufficientBalance("full exit of a missing account")
        effective = replace(tx, amount=amount)
        op = OnchainOp(OnchainOpKind.FULL_EXIT_TO, tx.target, tx.token, amount)
        return effective, op

    if k == TxKind.CHANGE_PUBKEY:
        leaf = state.account(tx.account)
        _check_nonce(leaf, tx.nonce, ctx)
        _pay_fee(state, leaf, tx)
        leaf.l2_pubkey = tx.new_pubkey
        leaf.nonce += 1
        return tx, None

    if k == TxKind.FORCED_EXIT:
        leaf = state.account(tx.to_account)
        if leaf.l2_pubkey != ZERO_PUBKEY:
            raise StateError("forced exit targets locked accounts only")
        if tx.target != leaf.l1_address:
            raise StateError("forced exit target address mismatch")
        amount = leaf.balance(tx.token) if ctx.fill else tx.amount
        leaf.debit(tx.token, amount)
        effective = replace(tx, amount=amount)
        op = OnchainOp(OnchainOpKind.FORCED_EXIT_TO, tx.target, tx.token, amount)
        return effective, op

    if k == TxKind.MINT_NFT:
        creator = state.account(tx.account)
        _check_nonce(creator, tx.nonce, ctx)
        if ctx.fill:
            token = state.next_nft_id
            state.next_nft_id += 1
        else:
            token = tx.token
            state.next_nft_id = max(state.next_nft_id, token + 1)
        if token < NFT_TOKEN_FLOOR:
            raise StateError("NFT id below the reserved range")
        _pay_fee(state, creator, tx)
        creator.nonce += 1
        state.account(tx.to_account).credit(token, 1)
        return replace(tx, token=token), None

    if k == TxKind.WITHDRAW_NFT:
        owner = state.account(tx.account)
        _check_nonce(owner, tx.nonce, ctx)
        if is_fungible(tx.token):
            raise StateError("WithdrawNFT requires an NFT token id")
        owner.debit(tx.token, 1)
        _pay_fee(state, owner, tx)
        owner.nonce += 1
        op = OnchainOp(OnchainOpKind.WITHDRAW_NFT_TO, tx.target, tx.token, 1)
        return tx, op

    if k == TxKind.SWAP:
        party_a = state.account(tx.account)
        party_b = state.account(tx.to_account)
        _check_nonce(party_a, tx.nonce, ctx)
        if ctx.check_signatures and party_b.nonce != tx.nonce_b:
            raise NonceMismatch("counterparty nonce mismatch")
        party_a.debit(tx.token, tx.amount)
        party_b.debit(tx.token_b, tx.amount_b)
        _pay_fee(state, party_a, tx)
        party_a.credit(tx.token_b, tx.amount_b)
        party_b.credit(tx.token, tx.amount)
        party_a.nonce += 1
        party_b.nonce += 1
        return tx, None

    if k == TxKind.CHANGE_GROUP:
        sender = state.account(tx.account)
        _check_nonce(sender, tx.nonce, ctx)
        sender.debit(tx.token, tx.amount)
        _pay_fee(state, sender, tx)
        sender.nonce += 1
        op = OnchainOp(
            OnchainOpKind.CHANGE_GROUP_TO,
            tx.target,
            tx.token,
            tx.amount,
            destination_group=tx.destination_group,
        )
        return tx, op

    if k == TxKind.FULL_CHANGE_GROUP:
        leaf = state.accounts.get(tx.account)
        amount = tx.amount
        if ctx.fill:
            amount = leaf.balance(tx.token) if leaf else 0
        if leaf is not None:
            leaf.debit(tx.token, amount)
        elif amount:
            raise InsufficientBalance("full change-group of a missing account")
        effective = replace(tx, amount=amount)
        op = OnchainOp(
            OnchainOpKind.FULL_CHANGE_GROUP_TO,
            tx.target,
            tx.token,
            amount,
            destination_group=tx.destination_group,
        )
        return effective, op

    raise StateError(f"unhandled kind {k}")  # pragma: no cover


def replay_pubdata(
    initial_root: bytes, pubdata_stream: Iterable[bytes], group: GroupId
) -> bytes:
    """Rebuild a group's state from its committed pubdata history.

    ``pubdata_stream`` is the ordered per-block pubdata starting from
    genesis; the initial root must therefore be the empty root.  Signature
    checks are skipped (signatures are not on-chain); only state effects
    are replayed.
    """
    if initial_root != empty_root():
        raise StateError("replay must start from the empty root")
    state = GroupState(group=group)
    ctx = ApplyContext(check_signatures=False, fill=False)
    for block_pubdata in pubdata_stream:
        for tx in decode_block_pubdata(block_pubdata, group=group):
            apply_transaction(state, SignedTransaction(tx=tx), ctx)
    return state_root(state)


def replay_roots(
    pubdata_stream: Iterable[bytes], group: GroupId
) -> list[bytes]:
    """Like :func:`replay_pubdata` but returns the root after every block."""
    state = GroupState(group=group)
    ctx = ApplyContext(check_signatures=False, fill=False)
    roots = []
    for block_pubdata in pubdata_stream:
        for tx in decode_block_pubdata(block_pubdata, group=group):
            apply_transaction(state, SignedTransaction(tx=tx), ctx)
        roots.append(state_root(state))
    return roots
