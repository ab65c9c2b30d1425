import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rollupsim import smt
from rollupsim.signing import Keypair, countersign, sign_transaction
from rollupsim.state import (
    FEE_ACCOUNT,
    AccountExists,
    ApplyContext,
    BadSignature,
    GroupState,
    InsufficientBalance,
    NonceMismatch,
    StateError,
    UnknownAccount,
    apply_transaction,
    empty_root,
    prove_inclusion,
    replay_pubdata,
    replay_roots,
    state_root,
)
from rollupsim.types import (
    NFT_TOKEN_FLOOR,
    OnchainOpKind,
    SignedTransaction,
    Transaction,
    TxKind,
)

GROUP = 1
ALICE = Keypair.from_seed(hashlib.sha256(b"alice").digest())
BOB = Keypair.from_seed(hashlib.sha256(b"bob").digest())
REPLAY = ApplyContext(check_signatures=False, fill=False)


def fresh_state() -> GroupState:
    """Alice (1) and Bob (2) funded with token 0 and 1, keys registered."""
    state = GroupState(group=GROUP)
    for index, key in ((1, ALICE), (2, BOB)):
        deposit = Transaction(
            kind=TxKind.DEPOSIT, group=GROUP, to_account=index, token=0,
            amount=1000, target=key.pubkey[:20],
        )
        apply_transaction(state, SignedTransaction(tx=deposit))
        deposit2 = Transaction(
            kind=TxKind.DEPOSIT, group=GROUP, to_account=index, token=1,
            amount=1000, target=key.pubkey[:20],
        )
        apply_transaction(state, SignedTransaction(tx=deposit2))
        register = Transaction(
            kind=TxKind.CHANGE_PUBKEY, group=GROUP, account=index,
            new_pubkey=key.pubkey, nonce=0,
        )
        apply_transaction(state, sign_transaction(key, register))
    return state


def signed(key: Keypair, **fields) -> SignedTransaction:
    return sign_transaction(key, Transaction(group=GROUP, **fields))


class TestDeposit:
    def test_creates_account_and_credits(self):
        state = GroupState(group=GROUP)
        tx = Transaction(
            kind=TxKind.DEPOSIT, group=GROUP, to_account=1, token=0,
            amount=77, target=b"\x01" * 20,
        )
        apply_transaction(state, SignedTransaction(tx=tx))
        assert state.accounts[1].balance(0) == 77
        assert state.account_of_address(b"\x01" * 20) == 1

    def test_no_signature_needed(self):
        state = GroupState(group=GROUP)
        tx = Transaction(
            kind=TxKind.DEPOSIT, group=GROUP, to_account=1, token=0,
            amount=1, target=b"\x01" * 20,
        )
        apply_transaction(state, SignedTransaction(tx=tx), ApplyContext())


class TestTransfer:
    def test_moves_funds_and_pays_fee(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER, account=1, to_account=2,
            token=0, amount=100, fee=7, nonce=1,
        )
        apply_transaction(state, stx)
        assert state.accounts[1].balance(0) == 1000 - 100 - 7
        assert state.accounts[2].balance(0) == 1100
        assert state.accounts[FEE_ACCOUNT].balance(0) == 7
        assert state.accounts[1].nonce == 2

    def test_insufficient_balance(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER, account=1, to_account=2,
            token=0, amount=10**6, nonce=1,
        )
        root = state_root(state)
        with pytest.raises(InsufficientBalance):
            apply_transaction(state, stx)
        assert state_root(state) == root  # atomic: no partial effects

    def test_wrong_nonce(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER, account=1, to_account=2,
            token=0, amount=1, nonce=5,
        )
        with pytest.raises(NonceMismatch):
            apply_transaction(state, stx)

    def test_wrong_signer(self):
        state = fresh_state()
        stx = signed(
            BOB, kind=TxKind.TRANSFER, account=1, to_account=2,
            token=0, amount=1, nonce=1,
        )
        with pytest.raises(BadSignature):
            apply_transaction(state, stx)

    def test_missing_recipient(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER, account=1, to_account=9,
            token=0, amount=1, nonce=1,
        )
        with pytest.raises(UnknownAccount):
            apply_transaction(state, stx)


class TestTransferToNew:
    def test_creates_fresh_account(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER_TO_NEW, account=1,
            to_account=state.next_account_index, token=0, amount=50,
            nonce=1, target=b"\x09" * 20,
        )
        apply_transaction(state, stx)
        new = state.account_of_address(b"\x09" * 20)
        assert state.accounts[new].balance(0) == 50

    def test_existing_target_rejected(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.TRANSFER_TO_NEW, account=1, to_account=2,
            token=0, amount=50, nonce=1, target=b"\x09" * 20,
        )
        with pytest.raises(AccountExists):
            apply_transaction(state, stx)


class TestWithdrawals:
    def test_withdraw_emits_onchain_op(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.WITHDRAW, account=1, token=0, amount=30,
            fee=1, nonce=1, target=ALICE.pubkey[:20],
        )
        result = apply_transaction(state, stx)
        assert result.onchain_op.kind == OnchainOpKind.WITHDRAW_TO
        assert result.onchain_op.amount == 30
        assert state.accounts[1].balance(0) == 1000 - 31

    def test_full_exit_fills_amount(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.FULL_EXIT, group=GROUP, account=1, token=0,
            target=ALICE.pubkey[:20],
        )
        result = apply_transaction(state, SignedTransaction(tx=tx))
        assert result.tx.amount == 1000
        assert state.accounts[1].balance(0) == 0
        assert result.onchain_op.kind == OnchainOpKind.FULL_EXIT_TO

    def test_full_exit_of_missing_account_is_zero(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.FULL_EXIT, group=GROUP, account=50, token=0,
            target=b"\x10" * 20,
        )
        result = apply_transaction(state, SignedTransaction(tx=tx))
        assert result.tx.amount == 0

    def test_forced_exit_requires_locked_target(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.FORCED_EXIT, group=GROUP, to_account=2, token=0,
            target=BOB.pubkey[:20],
        )
        # Bob registered a key, so his account is not forceable.
        with pytest.raises(StateError):
            apply_transaction(state, SignedTransaction(tx=tx))

    def test_forced_exit_drains_locked_account(self):
        state = fresh_state()
        carol = b"\x0c" * 20
        deposit = Transaction(
            kind=TxKind.DEPOSIT, group=GROUP, to_account=3, token=0,
            amount=40, target=carol,
        )
        apply_transaction(state, SignedTransaction(tx=deposit))
        tx = Transaction(
            kind=TxKind.FORCED_EXIT, group=GROUP, to_account=3, token=0,
            target=carol,
        )
        result = apply_transaction(state, SignedTransaction(tx=tx))
        assert result.tx.amount == 40
        assert state.accounts[3].balance(0) == 0


class TestNft:
    def test_mint_assigns_reserved_ids(self):
        state = fresh_state()
        ids = []
        for nonce in (1, 2):
            stx = signed(
                ALICE, kind=TxKind.MINT_NFT, account=1, to_account=2,
                nonce=nonce, content_hash=bytes(32),
            )
            ids.append(apply_transaction(state, stx).tx.token)
        assert ids[0] >= NFT_TOKEN_FLOOR >= 2**31
        assert ids[1] == ids[0] + 1
        assert state.accounts[2].balance(ids[0]) == 1

    def test_withdraw_nft_requires_nft_token(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.WITHDRAW_NFT, account=1, token=0, nonce=1,
            target=ALICE.pubkey[:20], content_hash=bytes(32),
        )
        with pytest.raises(StateError):
            apply_transaction(state, stx)

    def test_mint_then_withdraw(self):
        state = fresh_state()
        mint = signed(
            ALICE, kind=TxKind.MINT_NFT, account=1, to_account=2, nonce=1,
            content_hash=bytes(32),
        )
        nft = apply_transaction(state, mint).tx.token
        withdraw = signed(
            BOB, kind=TxKind.WITHDRAW_NFT, account=2, token=nft, nonce=1,
            target=BOB.pubkey[:20], content_hash=bytes(32),
        )
        result = apply_transaction(state, withdraw)
        assert result.onchain_op.kind == OnchainOpKind.WITHDRAW_NFT_TO
        assert state.accounts[2].balance(nft) == 0


class TestSwap:
    def test_swap_exchanges_tokens(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.SWAP, group=GROUP, account=1, to_account=2,
            token=0, token_b=1, amount=100, amount_b=200, fee=3,
            nonce=1, nonce_b=1,
        )
        stx = countersign(sign_transaction(ALICE, tx), BOB)
        apply_transaction(state, stx)
        assert state.accounts[1].balance(0) == 1000 - 100 - 3
        assert state.accounts[1].balance(1) == 1200
        assert state.accounts[2].balance(0) == 1100
        assert state.accounts[2].balance(1) == 800
        assert state.accounts[1].nonce == 2 and state.accounts[2].nonce == 2

    def test_swap_without_countersignature(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.SWAP, group=GROUP, account=1, to_account=2,
            token=0, token_b=1, amount=1, amount_b=1, nonce=1, nonce_b=1,
        )
        with pytest.raises(BadSignature):
            apply_transaction(state, sign_transaction(ALICE, tx))


class TestCrossGroup:
    def test_change_group_carries_destination(self):
        state = fresh_state()
        stx = signed(
            ALICE, kind=TxKind.CHANGE_GROUP, account=1, token=0, amount=60,
            fee=2, nonce=1, target=ALICE.pubkey[:20],
            source_group=GROUP, destination_group=GROUP + 1,
        )
        result = apply_transaction(state, stx)
        op = result.onchain_op
        assert op.kind == OnchainOpKind.CHANGE_GROUP_TO
        assert op.destination_group == GROUP + 1
        assert op.amount == 60
        assert state.accounts[1].balance(0) == 1000 - 62

    def test_full_change_group_fills_amount(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.FULL_CHANGE_GROUP, group=GROUP, account=1, token=1,
            target=ALICE.pubkey[:20], source_group=GROUP,
            destination_group=GROUP + 1,
        )
        result = apply_transaction(state, SignedTransaction(tx=tx))
        assert result.tx.amount == 1000
        assert result.onchain_op.destination_group == GROUP + 1
        assert state.accounts[1].balance(1) == 0

    def test_same_group_rejected(self):
        with pytest.raises(Exception):
            Transaction(
                kind=TxKind.CHANGE_GROUP, group=GROUP, account=1, token=0,
                amount=1, nonce=1, target=bytes(20),
                source_group=GROUP, destination_group=GROUP,
            ).validate()


class TestGroupBinding:
    def test_wrong_group_rejected(self):
        state = fresh_state()
        tx = Transaction(
            kind=TxKind.TRANSFER, group=GROUP + 1, account=1, to_account=2,
            token=0, amount=1, nonce=1,
        )
        with pytest.raises(StateError):
            apply_transaction(state, sign_transaction(ALICE, tx))


class TestConservation:
    def test_internal_ops_conserve_totals(self):
        state = fresh_state()
        before = state.total_balance()
        apply_transaction(
            state,
            signed(
                ALICE, kind=TxKind.TRANSFER, account=1, to_account=2,
                token=0, amount=100, fee=7, nonce=1,
            ),
        )
        tx = Transaction(
            kind=TxKind.SWAP, group=GROUP, account=1, to_account=2,
            token=0, token_b=1, amount=10, amount_b=20, nonce=2, nonce_b=1,
        )
        apply_transaction(state, countersign(sign_transaction(ALICE, tx), BOB))
        assert state.total_balance() == before


class TestReplay:
    def collect(self, state: GroupState, results) -> list[bytes]:
        return [r.pubdata for r in results]

    def test_replay_reproduces_roots(self):
        # Build three "blocks" worth of pubdata and replay them.
        state = fresh_state()
        genesis_ops = []
        rebuild = GroupState(group=GROUP)
        for index, key in ((1, ALICE), (2, BOB)):
            for token in (0, 1):
                tx = Transaction(
                    kind=TxKind.DEPOSIT, group=GROUP, to_account=index,
                    token=token, amount=1000, target=key.pubkey[:20],
                )
                genesis_ops.append(
                    apply_transaction(rebuild, SignedTransaction(tx=tx))
                )
            reg = Transaction(
                kind=TxKind.CHANGE_PUBKEY, group=GROUP, account=index,
                new_pubkey=key.pubkey, nonce=0,
            )
            genesis_ops.append(apply_transaction(rebuild, sign_transaction(key, reg)))
        assert state_root(rebuild) == state_root(state)

        results = [
            apply_transaction(
                state,
                signed(
                    ALICE, kind=TxKind.TRANSFER, account=1, to_account=2,
                    token=0, amount=100, fee=7, nonce=1,
                ),
            ),
            apply_transaction(
                state,
                signed(
                    BOB, kind=TxKind.WITHDRAW, account=2, token=0, amount=5,
                    nonce=1, target=BOB.pubkey[:20],
                ),
            ),
        ]
        from rollupsim.encoding import encode_op_padded

        block1 = b"".join(encode_op_padded(r.tx) for r in genesis_ops)
        block2 = b"".join(encode_op_padded(r.tx) for r in results)
        assert replay_pubdata(empty_root(), [block1, block2], GROUP) == state_root(
            state
        )
        roots = replay_roots([block1, block2], GROUP)
        assert roots[-1] == state_root(state)
        assert len(roots) == 2

    def test_replay_requires_empty_start(self):
        with pytest.raises(StateError):
            replay_pubdata(b"\x00" * 32, [], GROUP)

    def test_replay_fills_nothing(self):
        # Replay must reuse the published NFT id, not invent a new one.
        state = fresh_state()
        mint = signed(
            ALICE, kind=TxKind.MINT_NFT, account=1, to_account=2, nonce=1,
            content_hash=bytes(32),
        )
        result = apply_transaction(state, mint)
        replayed = GroupState(group=GROUP)
        replayed.accounts = fresh_state().accounts
        replayed.next_account_index = 3
        apply_transaction(replayed, SignedTransaction(tx=result.tx), REPLAY)
        assert replayed.accounts[2].balance(result.tx.token) == 1


class TestInclusionProofs:
    def test_account_inclusion(self):
        state = fresh_state()
        path, leaf_hash = prove_inclusion(state, 1)
        assert smt.verify_path(state_root(state), leaf_hash, path)

    def test_balance_inclusion(self):
        state = fresh_state()
        apath, ahash, bpath, bhash = prove_inclusion(state, 1, token=0)
        assert smt.verify_path(state_root(state), ahash, apath)
        assert smt.verify_path(
            state.accounts[1].balance_root(), bhash, bpath
        )


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from([1, 2]), st.integers(1, 50), st.integers(0, 2)),
        min_size=1,
        max_size=12,
    )
)
def test_transfer_sequences_conserve_and_replay(moves):
    """Random transfer sequences: totals conserved, roots replayable."""
    from rollupsim.encoding import encode_op_padded

    state = fresh_state()
    baseline_root = state_root(state)
    total = state.total_balance()
    pubdata = []
    for sender, amount, fee in moves:
        key = ALICE if sender == 1 else BOB
        stx = signed(
            key,
            kind=TxKind.TRANSFER,
            account=sender,
            to_account=3 - sender,
            token=0,
            amount=amount,
            fee=fee,
            nonce=state.accounts[sender].nonce,
        )
        pubdata.append(encode_op_padded(apply_transaction(state, stx).tx))
    assert state.total_balance() == total

    replayed = fresh_state()
    assert state_root(replayed) == baseline_root
    for chunk in pubdata:
        from rollupsim.encoding import decode_pubdata

        tx = decode_pubdata(chunk, group=GROUP)
        apply_transaction(replayed, SignedTransaction(tx=tx), REPLAY)
    assert state_root(replayed) == state_root(state)
