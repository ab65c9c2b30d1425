"""Validator node: mempool admission, block building, prover workers,
and the commit -> prove -> execute cycle against the contract.

One validator instance serves one group; distinct groups are fully
independent.  Blocks are packed greedily in FIFO order (priority
operations first), padded with noops to an exact chunk capacity, and
pushed through the three contract phases in one cycle.
"""

from __future__ import annotations

import queue
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .contract import ContractState, PriorityOp
from .encoding import encode_op_padded
from .proofs import (
    BlockProof,
    BlockWitness,
    ProverRefused,
    WhitelistPolicy,
    aggregate_proofs,
    check_block,
    make_block_proof,
    simulated_prove_seconds,
)
from .signing import verify_signature
from .state import ApplyContext, GroupState, apply_transaction, state_root
from .types import (
    PRIORITY_KINDS,
    WITHDRAWAL_KINDS,
    Block,
    GroupId,
    L1Address,
    RollupError,
    SignedTransaction,
    Transaction,
    TxKind,
    chunk_count,
)

BLOCK_CAPACITIES = (26, 78, 182, 390)
AGGREGATION_FACTORS = (1, 4, 8)


class RejectReason(Enum):
    BAD_SIGNATURE = "signature does not verify"
    WRONG_GROUP = "transaction signed for a different group"
    BAD_NONCE = "nonce is not the account's next nonce"
    NOT_WHITELISTED = "sender lacks transfer rights in a permissioned group"
    UNKNOWN_ACCOUNT = "sender account does not exist"
    INVALID = "transaction is structurally invalid"


class PipelineError(RollupError):
    pass


@dataclass(slots=True)
class CycleRow:
    phase: str  # commit | prove | execute
    group: GroupId
    block: int
    gas: int
    simulated_prove_seconds: float = 0.0


@dataclass(slots=True)
class CycleReport:
    group: GroupId
    rows: list[CycleRow] = field(default_factory=list)
    blocks: list[Block] = field(default_factory=list)

    def total_gas(self) -> int:
        return sum(row.gas for row in self.rows)


class Validator:
    """The operator of one group: collects transactions, builds blocks,
    and drives the contract's three-phase update."""

    def __init__(self, contract: ContractState, group: GroupId, address: L1Address):
        config = contract.groups[group]
        if config.validator != address:
            raise PipelineError("address is not the group's validator")
        self.contract = contract
        self.group = group
        self.address = address
        self.state = GroupState(group=group)
        self.mempool: deque[SignedTransaction] = deque()
        self._expected_nonce: dict[int, int] = {}
        self._priority_cursor = 0  # queue entries already packed into blocks
        self.block_history: list[Block] = []
        self._snapshots: dict[int, GroupState] = {}  # state before each block

    # -- mempool --------------------------------------------------------

    def next_account_index(self) -> int:
        return self.state.next_account_index

    def expected_nonce(self, account: int) -> int:
        if account in self._expected_nonce:
            return self._expected_nonce[account]
        leaf = self.state.accounts.get(account)
        return leaf.nonce if leaf else 0

    def submit_tx(self, stx: SignedTransaction) -> Optional[RejectReason]:
        """Admit a user transaction; returns None on acceptance."""
        tx = stx.tx
        try:
            tx.validate()
        except RollupError:
            return RejectReason.INVALID
        if tx.kind in PRIORITY_KINDS or tx.kind == TxKind.NOOP:
            return RejectReason.INVALID  # priority ops enter via the contract
        if tx.group != self.group:
            return RejectReason.WRONG_GROUP
        if not verify_signature(stx):
            return RejectReason.BAD_SIGNATURE
        if tx.kind != TxKind.CHANGE_PUBKEY and tx.account not in self.state.accounts:
            return RejectReason.UNKNOWN_ACCOUNT
        # Signer must own the account (blocks are applied with signature
        # checks off, so ownership is enforced here and in check_block).
        if tx.kind == TxKind.CHANGE_PUBKEY:
            if stx.signer_pubkey != tx.new_pubkey:
                return RejectReason.BAD_SIGNATURE
        else:
            if self.state.accounts[tx.account].l2_pubkey != stx.signer_pubkey:
                return RejectReason.BAD_SIGNATURE
            if (
                tx.kind == TxKind.SWAP
                and self.state.accounts[tx.to_account].l2_pubkey
                != stx.second_signer_pubkey
            ):
                return RejectReason.BAD_SIGNATURE
        if tx.nonce != self.expected_nonce(tx.account):
            return RejectReason.BAD_NONCE
        if tx.kind == TxKind.SWAP and tx.nonce_b != self.expected_nonce(tx.to_account):
            return RejectReason.BAD_NONCE
        if not self._whitelist_permits(tx):
            return RejectReason.NOT_WHITELISTED
        self.mempool.append(stx)
        self._expected_nonce[tx.account] = tx.nonce + 1
        if tx.kind == TxKind.SWAP:
            self._expected_nonce[tx.to_account] = tx.nonce_b + 1
        return None

    def _whitelist_permits(self, tx: Transaction) -> bool:
        config = self.contract.groups[self.group]
        if not config.permissioned:
            return True
        leaf = self.state.accounts.get(tx.account)
        sender_address = leaf.l1_address if leaf else tx.target
        if self.contract.is_whitelisted(self.group, sender_address):
            return True
        return tx.kind in WITHDRAWAL_KINDS

    # -- block building --------------------------------------------------

    def _pending_priority(self) -> list[PriorityOp]:
        return self.contract.ledgers[self.group].priority_queue[self._priority_cursor :]

    def _resolve_priority(self, op: PriorityOp) -> SignedTransaction:
        template = op.template
        if template.kind == TxKind.DEPOSIT:
            index = self.state.account_of_address(template.target)
            if index is None:
                index = self.state.next_account_index
            from dataclasses import replace

            template = replace(template, to_account=index)
        return SignedTransaction(tx=template)

    def build_block(self, capacity_chunks: int) -> Block:
        """Greedy FIFO packing: priority ops first, then user txs; a tx
        that would overflow the capacity is deferred, never split."""
        for stx in self.mempool:
            if chunk_count(stx.tx.kind) > capacity_chunks:
                raise PipelineError(
                    f"{stx.tx.kind.name} does not fit a {capacity_chunks}-chunk block"
                )
        snapshot = self.state.copy()
        old_root = state_root(snapshot)
        used = 0
        included: list[SignedTransaction] = []
        pubdata_parts: list[bytes] = []
        ctx = ApplyContext(check_signatures=False, fill=True)

        # Priority operations, FIFO from the contract queue.
        priority = self._pending_priority()
        taken_priority = 0
        for op in priority:
            cost = chunk_count(op.template.kind)
            if used + cost > capacity_chunks:
                break
            stx = self._resolve_priority(op)
            try:
                result = apply_transaction(self.state, stx, ctx)
            except RollupError:
                # Inapplicable queue head (e.g. a forced exit whose target
                # registered a key meanwhile).  FIFO forbids skipping it,
                # so stop here; if it stays stuck, expiry freezes the group.
                break
            included.append(stx)
            pubdata_parts.append(encode_op_padded(result.tx))
            used += cost
            taken_priority += 1
        self._priority_cursor += taken_priority

        # User transactions; deferred ones stay queued for the next block.
        deferred: deque[SignedTransaction] = deque()
        while self.mempool:
            stx = self.mempool.popleft()
            cost = chunk_count(stx.tx.kind)
            if used + cost > capacity_chunks:
                deferred.append(stx)
                continue
            try:
                result = apply_transaction(self.state, stx, ctx)
            except RollupError:
                continue  # stale tx (admission raced a priority op); drop it
            included.append(stx)
            pubdata_parts.append(encode_op_padded(result.tx))
            used += cost
        self.mempool = deferred

        noop = SignedTransaction(tx=Transaction(kind=TxKind.NOOP, group=self.group))
        while used < capacity_chunks:
            included.append(noop)
            pubdata_parts.append(encode_op_padded(noop.tx))
            used += 1

        block = Block(
            group=self.group,
            number=len(self.block_history),
            transactions=included,
            capacity_chunks=capacity_chunks,
            old_root=old_root,
            new_root=state_root(self.state),
            pubdata=b"".join(pubdata_parts),
        )
        self._snapshots[block.number] = snapshot
        self.block_history.append(block)
        return block

    def witness_of(self, block: Block) -> BlockWitness:
        config = self.contract.groups[self.group]
        policy = WhitelistPolicy(
            permissioned=config.permissioned,
            allowed=frozenset(self.contract.whitelist[self.group]),
        )
        return BlockWitness(
            group=self.group,
            block=block,
            initial_state=self._snapshots[block.number],
            policy=policy,
        )

    # -- cycle -----------------------------------------------------------

    def run_cycle(
        self,
        n_blocks: int,
        capacity_chunks: int,
        aggregate_n: int = 1,
        n_workers: int = 1,
        gas_mode: Optional[str] = None,
    ) -> CycleReport:
        if n_blocks % aggregate_n != 0:
            raise PipelineError("n_blocks must be divisible by aggregate_n")
        gas_mode = gas_mode or self.contract.gas_config.mode
        report = CycleReport(group=self.group)
        meter = self.contract.gas_meter

        blocks = [self.build_block(capacity_chunks) for _ in range(n_blocks)]
        report.blocks = blocks

        before = meter.total()
        try:
            self.contract.commit_blocks(self.address, blocks)
        except RollupError:
            # Atomic at the contract boundary: roll back local effects.
            self._rollback(blocks)
            raise
        # The contract consumed exactly the priority ops we packed.
        self._priority_cursor = 0
        commit_gas = meter.total() - before
        for block in blocks:
            report.rows.append(
                CycleRow("commit", self.group, block.number, commit_gas // n_blocks)
            )

        witnesses = [self.witness_of(block) for block in blocks]
        proofs = prove_witnesses(witnesses, n_workers=n_workers)
        for start in range(0, n_blocks, aggregate_n):
            agg = aggregate_proofs(proofs[start : start + aggregate_n])
            before = meter.total()
            self.contract.prove_blocks(
                self.address, agg, blocks[start].number, aggregate_n
            )
            prove_gas = meter.total() - before
            seconds = simulated_prove_seconds(capacity_chunks, gas_mode)
            for offset in range(aggregate_n):
                report.rows.append(
                    CycleRow(
                        "prove",
                        self.group,
                        blocks[start + offset].number,
                        prove_gas // aggregate_n,
                        simulated_prove_seconds=seconds,
                    )
                )

        before = meter.total()
        self.contract.execute_blocks(self.address, n_blocks)
        execute_gas = meter.total() - before
        for block in blocks:
            report.rows.append(
                CycleRow("execute", self.group, block.number, execute_gas // n_blocks)
            )
        return report

    def _rollback(self, blocks: list[Block]) -> None:
        first = blocks[0]
        self.state = self._snapshots[first.number].copy()
        self._expected_nonce.clear()
        self._priority_cursor = 0
        del self.block_history[first.number :]
        for number in list(self._snapshots):
            if number >= first.number:
                del self._snapshots[number]


# -- prover workers -----------------------------------------------------


@dataclass(slots=True)
class ProofJob:
    index: int
    witness: BlockWitness


def prover_worker_step(
    jobs: "queue.Queue[ProofJob]", results: dict[int, BlockProof | ProverRefused]
) -> bool:
    """Process at most one job; False when the queue is drained."""
    try:
        job = jobs.get_nowait()
    except queue.Empty:
        return False
    try:
        results[job.index] = make_block_proof(job.witness)
    except ProverRefused as refused:
        results[job.index] = refused
    finally:
        jobs.task_done()
    return True


def prove_witnesses(
    witnesses: list[BlockWitness], n_workers: int = 1
) -> list[BlockProof]:
    """Prove every witness exactly once across ``n_workers`` threads."""
    jobs: "queue.Queue[ProofJob]" = queue.Queue()
    for index, witness in enumerate(witnesses):
        jobs.put(ProofJob(index, witness))
    results: dict[int, BlockProof | ProverRefused] = {}

    if n_workers <= 1:
        while prover_worker_step(jobs, results):
            pass
    else:
        def drain() -> None:
            while prover_worker_step(jobs, results):
                pass

        threads = [threading.Thread(target=drain) for _ in range(n_workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    out: list[BlockProof] = []
    for index in range(len(witnesses)):
        result = results[index]
        if isinstance(result, ProverRefused):
            raise result
        out.append(result)
    return out


__all__ = [
    "AGGREGATION_FACTORS",
    "BLOCK_CAPACITIES",
    "CycleReport",
    "CycleRow",
    "PipelineError",
    "ProofJob",
    "RejectReason",
    "Validator",
    "check_block",
    "prove_witnesses",
    "prover_worker_step",
]
