"""Simulated layer-1 contract.

One serialized state machine holding the group registry, the validator
mapping, whitelists, pending balances, per-group priority queues and the
committed/proven/executed block ledgers.  The commit, prove, and execute
entry points mirror the three-phase rollup update; the prove step
rebuilds the expected public input from the stored commitment and the
caller's registered group, so a validator can never pass off another
group's blocks as their own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from . import state as state_mod
from .encoding import decode_block_pubdata
from .gasmodel import (
    CATEGORY_COMMIT_BASE,
    CATEGORY_COMMIT_EXTRA,
    CATEGORY_EXECUTION_BASE,
    CATEGORY_EXECUTION_EXTRA,
    CATEGORY_EXTERNAL,
    CATEGORY_PROVE_BASE,
    GasConfig,
    GasMeter,
    default_gas_config,
)
from .proofs import AggregatedProof, block_hash, public_input, verify_aggregate
from .types import (
    CROSS_GROUP_OP_KINDS,
    MAX_GROUPS,
    PRIORITY_KINDS,
    Block,
    GroupId,
    L1Address,
    OnchainOp,
    OnchainOpKind,
    RollupError,
    TokenId,
    Transaction,
    TxKind,
    check_address,
    is_fungible,
)

DEFAULT_PRIORITY_EXPIRY_BLOCKS = 100


class ContractError(RollupError):
    """An entry point rejected the call; no state was modified."""


class NotAuthorized(ContractError):
    pass


class GroupFrozen(ContractError):
    pass


class CommitRejected(ContractError):
    pass


class ProofRejected(ContractError):
    pass


class DataMode(Enum):
    ZK_ROLLUP = "zk_rollup"
    VALIDIUM = "validium"  # stored and surfaced; commit behavior identical


@dataclass(slots=True)
class GroupConfig:
    id: GroupId
    permissioned: bool
    data_mode: DataMode
    validator: L1Address
    governor: L1Address
    frozen: bool = False


@dataclass(frozen=True, slots=True)
class PriorityOp:
    """An L1-initiated operation the validator must include FIFO."""

    id: int
    group: GroupId
    template: Transaction  # kind, accounts, token, target, groups; amount for deposits
    enqueued_at: int  # group's committed block count at enqueue time


@dataclass(slots=True)
class CommittedBlock:
    number: int
    commitment: bytes
    old_root: bytes
    new_root: bytes
    pubdata: bytes
    onchain_ops: list[OnchainOp]


@dataclass(slots=True)
class GroupLedger:
    committed: list[CommittedBlock] = field(default_factory=list)
    proven_count: int = 0
    executed_count: int = 0
    priority_queue: list[PriorityOp] = field(default_factory=list)


class ContractState:
    """The deployed contract; all entry points execute in call order."""

    def __init__(
        self,
        gas_config: Optional[GasConfig] = None,
        priority_expiry_blocks: int = DEFAULT_PRIORITY_EXPIRY_BLOCKS,
    ):
        self.gas_config = gas_config or default_gas_config()
        self.priority_expiry_blocks = priority_expiry_blocks
        self.gas_meter = GasMeter()
        self.groups: dict[GroupId, GroupConfig] = {}
        self.validator_of: dict[L1Address, GroupId] = {}
        self.whitelist: dict[GroupId, set[L1Address]] = {}
        self.stored_roots: dict[GroupId, bytes] = {}
        self.pending_balance: dict[tuple[L1Address, TokenId], int] = {}
        self.ledgers: dict[GroupId, GroupLedger] = {}
        self.next_priority_id = 0
        self.total_deposited = 0
        self.total_withdrawn = 0

    # -- lifecycle -----------------------------------------------------

    def create_group(
        self,
        caller: L1Address,
        permissioned: bool,
        data_mode: DataMode,
        validator: L1Address,
    ) -> GroupId:
        check_address(caller)
        check_address(validator)
        if len(self.groups) >= MAX_GROUPS:
            raise ContractError("group capacity exhausted")
        if validator in self.validator_of:
            raise ContractError("validator address already bound to a group")
        group = len(self.groups)
        self.groups[group] = GroupConfig(
            id=group,
            permissioned=permissioned,
            data_mode=data_mode,
            validator=validator,
            governor=caller,
        )
        self.validator_of[validator] = group
        self.whitelist[group] = set()
        self.stored_roots[group] = state_mod.empty_root()
        self.ledgers[group] = GroupLedger()
        self.gas_meter.charge(
            "create_group", CATEGORY_EXTERNAL, self.gas_config.create_group, group
        )
        return group

    def set_whitelist(
        self, caller: L1Address, group: GroupId, address: L1Address, allowed: bool
    ) -> None:
        config = self._group(group)
        if caller != config.governor:
            raise NotAuthorized("only the governor manages the whitelist")
        if not config.permissioned:
            raise ContractError("group is permissionless")
        if allowed:
            self.whitelist[group].add(address)
        else:
            self.whitelist[group].discard(address)
        self.gas_meter.charge(
            "set_whitelist", CATEGORY_EXTERNAL, self.gas_config.set_whitelist, group
        )

    def is_whitelisted(self, group: GroupId, address: L1Address) -> bool:
        return address in self.whitelist.get(group, set())

    # -- user entry points ---------------------------------------------

    def deposit(
        self, caller: L1Address, group: GroupId, token: TokenId, amount: int
    ) -> int:
        config = self._group(group)
        if amount <= 0:
            raise ContractError("deposit amount must be positive")
        if config.permissioned and not self.is_whitelisted(group, caller):
            raise NotAuthorized("caller is not on the group's whitelist")
        template = Transaction(
            kind=TxKind.DEPOSIT, group=group, token=token, amount=amount, target=caller
        )
        self.total_deposited += amount
        self.gas_meter.charge(
            "deposit", CATEGORY_EXTERNAL, self.gas_config.deposit_gas(token), group
        )
        return self._enqueue_priority(group, template)

    def request_full_exit(
        self,
        caller: L1Address,
        group: GroupId,
        account: int,
        token: TokenId,
        kind: TxKind = TxKind.FULL_EXIT,
        destination_group: Optional[GroupId] = None,
    ) -> int:
        self._group(group)
        if kind not in (TxKind.FULL_EXIT, TxKind.FORCED_EXIT, TxKind.FULL_CHANGE_GROUP):
            raise ContractError(f"{kind.name} is not a priority exit kind")
        if kind == TxKind.FULL_CHANGE_GROUP:
            if destination_group is None:
                raise ContractError("FullChangeGroup needs a destination group")
            self._group(destination_group)
            if destination_group == group:
                raise ContractError("source and destination group must differ")
            template = Transaction(
                kind=kind,
                group=group,
                account=account,
                token=token,
                target=caller,
                source_group=group,
                destination_group=destination_group,
            )
        elif kind == TxKind.FORCED_EXIT:
            template = Transaction(
                kind=kind, group=group, to_account=account, token=token, target=caller
            )
        else:
            template = Transaction(
                kind=kind, group=group, account=account, token=token, target=caller
            )
        self.gas_meter.charge(
            "request_full_exit",
            CATEGORY_EXTERNAL,
            self.gas_config.full_exit_request,
            group,
        )
        return self._enqueue_priority(group, template)

    def withdraw_pending(self, caller: L1Address, token: TokenId) -> int:
        key = (caller, token)
        amount = self.pending_balance.get(key, 0)
        if amount <= 0:
            raise ContractError("no pending balance for this token")
        del self.pending_balance[key]
        if is_fungible(token):  # NFT units carry no locked value
            self.total_withdrawn += amount
        self.gas_meter.charge(
            "withdraw_pending",
            CATEGORY_EXTERNAL,
            self.gas_config.withdraw_pending_gas(token),
        )
        return amount

    # -- validator entry points ----------------------------------------

    def commit_blocks(self, caller: L1Address, blocks: list[Block]) -> None:
        group = self._validator_group(caller)
        config = self._group(group)
        if config.frozen:
            raise GroupFrozen("group is frozen; no further commits")
        if not blocks:
            raise CommitRejected("empty commit")
        ledger = self.ledgers[group]

        expected_number = len(ledger.committed)
        expected_root = self._last_committed_root(group)
        staged: list[CommittedBlock] = []
        matched = 0
        queue = ledger.priority_queue
        total_bytes = 0
        total_extra_events = 0

        for block in blocks:
            if block.group != group:
                raise CommitRejected(
                    f"block of group {block.group} committed by validator of {group}"
                )
            if block.number != expected_number:
                raise CommitRejected(
                    f"block number {block.number}, expected {expected_number}"
                )
            if block.old_root != expected_root:
                raise CommitRejected("old root does not extend the committed chain")
            try:
                txs = decode_block_pubdata(block.pubdata, group=group)
            except RollupError as exc:
                raise CommitRejected(f"undecodable pubdata: {exc}") from exc

            onchain_ops: list[OnchainOp] = []
            extra_events = 0
            for tx in txs:
                if tx.kind in PRIORITY_KINDS:
                    if matched >= len(queue):
                        raise CommitRejected("priority op not in the queue")
                    if not _matches_priority(queue[matched].template, tx):
                        raise CommitRejected("priority operations out of FIFO order")
                    matched += 1
                    extra_events += 1  # FIFO matching work at commit time
                op = _onchain_op_of(tx)
                if op is not None:
                    onchain_ops.append(op)
                    extra_events += 1

            commitment = block_hash(
                block.old_root, block.new_root, block.number, block.pubdata
            )
            staged.append(
                CommittedBlock(
                    number=block.number,
                    commitment=commitment,
                    old_root=block.old_root,
                    new_root=block.new_root,
                    pubdata=block.pubdata,
                    onchain_ops=onchain_ops,
                )
            )
            total_bytes += len(block.pubdata)
            total_extra_events += extra_events
            expected_number += 1
            expected_root = block.new_root

        # Liveness: any still-unmatched priority op past its expiry window
        # freezes the group instead of letting the validator censor it.
        new_count = expected_number
        for op in queue[matched:]:
            if new_count - op.enqueued_at > self.priority_expiry_blocks:
                config.frozen = True
                raise GroupFrozen(
                    f"priority op {op.id} expired; group {group} frozen"
                )

        ledger.committed.extend(staged)
        del queue[:matched]
        self.gas_meter.charge(
            "commit_blocks",
            CATEGORY_COMMIT_BASE,
            self.gas_config.commit_gas(len(blocks), total_bytes),
            group,
        )
        if total_extra_events:
            self.gas_meter.charge(
                "commit_blocks",
                CATEGORY_COMMIT_EXTRA,
                self.gas_config.commit_extra_per_op * total_extra_events,
                group,
            )

    def prove_blocks(
        self, caller: L1Address, agg: AggregatedProof, first_block: int, count: int
    ) -> None:
        group = self._validator_group(caller)
        ledger = self.ledgers[group]
        if first_block != ledger.proven_count:
            raise ProofRejected("blocks must be proven in order")
        if first_block + count > len(ledger.committed):
            raise ProofRejected("range extends past the committed ledger")
        records = ledger.committed[first_block : first_block + count]
        expected_pis = [public_input(rec.commitment, group) for rec in records]
        if not verify_aggregate(agg, expected_pis):
            raise ProofRejected("aggregated proof does not verify")
        for proof, rec in zip(agg.proofs, records):
            if proof.old_root != rec.old_root or proof.new_root != rec.new_root:
                raise ProofRejected("proof roots do not match the commitment")
        ledger.proven_count += count
        self.gas_meter.charge(
            "prove_blocks", CATEGORY_PROVE_BASE, self.gas_config.prove_gas(), group
        )

    def execute_blocks(self, caller: L1Address, count: int) -> None:
        group = self._validator_group(caller)
        ledger = self.ledgers[group]
        first = ledger.executed_count
        if first + count > ledger.proven_count:
            raise ContractError("cannot execute unproven blocks")
        records = ledger.committed[first : first + count]
        total_ops = 0
        for rec in records:
            for op in rec.onchain_ops:
                self._apply_onchain_op(group, op)
                total_ops += 1
            self.stored_roots[group] = rec.new_root
        ledger.executed_count += count
        self.gas_meter.charge(
            "execute_blocks",
            CATEGORY_EXECUTION_BASE,
            self.gas_config.execute_gas(count),
            group,
        )
        if total_ops:
            self.gas_meter.charge(
                "execute_blocks",
                CATEGORY_EXECUTION_EXTRA,
                self.gas_config.execute_extra_per_op * total_ops,
                group,
            )

    # -- reporting ------------------------------------------------------

    def gas_report_rows(self) -> list[tuple[int, str, str, int]]:
        return self.gas_meter.report_rows()

    def locked_value(self) -> int:
        return self.total_deposited - self.total_withdrawn

    def pending_total(self) -> int:
        return sum(
            amount
            for (_, token), amount in self.pending_balance.items()
            if is_fungible(token)
        )

    def queued_priority_total(self) -> int:
        return sum(
            op.template.amount
            for ledger in self.ledgers.values()
            for op in ledger.priority_queue
            if op.template.kind == TxKind.DEPOSIT
        )

    # -- internals -------------------------------------------------------

    def _group(self, group: GroupId) -> GroupConfig:
        try:
            return self.groups[group]
        except KeyError:
            raise ContractError(f"group {group} does not exist") from None

    def _validator_group(self, caller: L1Address) -> GroupId:
        try:
            return self.validator_of[caller]
        except KeyError:
            raise NotAuthorized("caller is not a bound validator") from None

    def _last_committed_root(self, group: GroupId) -> bytes:
        ledger = self.ledgers[group]
        if ledger.committed:
            return ledger.committed[-1].new_root
        return self.stored_roots[group]

    def _enqueue_priority(self, group: GroupId, template: Transaction) -> int:
        op_id = self.next_priority_id
        self.next_priority_id += 1
        ledger = self.ledgers[group]
        ledger.priority_queue.append(
            PriorityOp(
                id=op_id,
                group=group,
                template=template,
                enqueued_at=len(ledger.committed),
            )
        )
        return op_id

    def _apply_onchain_op(self, group: GroupId, op: OnchainOp) -> None:
        if op.kind in CROSS_GROUP_OP_KINDS and op.destination_group is not None:
            destination = self.groups.get(op.destination_group)
            if destination is not None and not destination.frozen:
                open_to_owner = not destination.permissioned or self.is_whitelisted(
                    op.destination_group, op.owner
                )
                if open_to_owner and op.amount > 0:
                    # Funds stay locked on the contract and re-enter the
                    # destination group through its deposit queue.
                    template = Transaction(
                        kind=TxKind.DEPOSIT,
                        group=op.destination_group,
                        token=op.token,
                        amount=op.amount,
                        target=op.owner,
                    )
                    self._enqueue_priority(op.destination_group, template)
                    return
            # Fallback: credit the pending balance so funds are never stuck.
        if op.amount > 0:
            key = (op.owner, op.token)
            self.pending_balance[key] = self.pending_balance.get(key, 0) + op.amount


def deploy(
    gas_config: Optional[GasConfig] = None,
    priority_expiry_blocks: int = DEFAULT_PRIORITY_EXPIRY_BLOCKS,
) -> ContractState:
    """Deploy the contract and charge the deployment gas."""
    contract = ContractState(gas_config, priority_expiry_blocks)
    contract.gas_meter.charge("deploy", CATEGORY_EXTERNAL, contract.gas_config.deploy)
    return contract


def _matches_priority(template: Transaction, tx: Transaction) -> bool:
    if template.kind != tx.kind:
        return False
    if template.kind == TxKind.DEPOSIT:
        return (
            template.token == tx.token
            and template.amount == tx.amount
            and template.target == tx.target
        )
    if template.kind == TxKind.FORCED_EXIT:
        return template.to_account == tx.to_account and template.token == tx.token
    # FullExit / FullChangeGroup: the published amount is resolved by the
    # validator, so only identity fields must match.
    same_groups = (
        template.kind != TxKind.FULL_CHANGE_GROUP
        or template.destination_group == tx.destination_group
    )
    return (
        template.account == tx.account
        and template.token == tx.token
        and template.target == tx.target
        and same_groups
    )


def _onchain_op_of(tx: Transaction) -> Optional[OnchainOp]:
    kind_map = {
        TxKind.WITHDRAW: OnchainOpKind.WITHDRAW_TO,
        TxKind.WITHDRAW_NFT: OnchainOpKind.WITHDRAW_NFT_TO,
        TxKind.FULL_EXIT: OnchainOpKind.FULL_EXIT_TO,
        TxKind.FORCED_EXIT: OnchainOpKind.FORCED_EXIT_TO,
        TxKind.CHANGE_GROUP: OnchainOpKind.CHANGE_GROUP_TO,
        TxKind.FULL_CHANGE_GROUP: OnchainOpKind.FULL_CHANGE_GROUP_TO,
    }
    op_kind = kind_map.get(tx.kind)
    if op_kind is None:
        return None
    amount = tx.amount if tx.kind != TxKind.WITHDRAW_NFT else 1
    destination = (
        tx.destination_group
        if tx.kind in (TxKind.CHANGE_GROUP, TxKind.FULL_CHANGE_GROUP)
        else None
    )
    return OnchainOp(op_kind, tx.target, tx.token, amount, destination)
