"""Scenario runner: a JSON action list driven against a fresh contract.

A scenario is ``{"seed": N, "actions": [...]}`` where each action is an
object with an ``op`` field:

    {"op": "create_group", "permissioned": false, "validator": "v0",
     "governor": "g0", "data_mode": "zk_rollup"}
    {"op": "whitelist", "group": 0, "user": "alice", "allowed": true}
    {"op": "deposit", "group": 0, "user": "alice", "token": 0, "amount": 100}
    {"op": "register_key", "group": 0, "user": "alice"}
    {"op": "submit_tx", "group": 0, "kind": "transfer", "from": "alice",
     "to": "bob", "token": 0, "amount": 5, "fee": 1}
    {"op": "request_exit", "group": 0, "user": "alice", "kind": "full_exit",
     "token": 0}
    {"op": "run_cycle", "group": 0, "blocks": 1, "capacity": 26, "aggregate": 1}
    {"op": "withdraw_pending", "user": "alice", "token": 0}

Users and validators are named; their keys and addresses derive from the
scenario seed, so the same file and seed replay to byte-identical
reports and state digests.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .contract import ContractState, DataMode, deploy
from .gasmodel import GasConfig, default_gas_config
from .pipeline import CycleRow, Validator
from .signing import Keypair, countersign, sign_transaction
from .state import state_root
from .types import (
    GroupId,
    RollupError,
    SignedTransaction,
    Transaction,
    TxKind,
)


class ScenarioError(RollupError):
    """Scenario file is malformed or an action failed; carries position."""

    def __init__(self, message: str, action_index: Optional[int] = None):
        where = f" (action {action_index})" if action_index is not None else ""
        super().__init__(message + where)
        self.action_index = action_index


@dataclass(slots=True)
class ScenarioUser:
    name: str
    keypair: Keypair
    address: bytes


@dataclass(slots=True)
class ScenarioResult:
    contract: ContractState
    validators: dict[GroupId, Validator]
    users: dict[str, ScenarioUser]
    cycle_rows: list[CycleRow] = field(default_factory=list)
    block_pubdata: dict[GroupId, list[bytes]] = field(default_factory=dict)
    block_roots: dict[GroupId, list[bytes]] = field(default_factory=dict)

    def digest(self) -> str:
        """Hash over every group's live root; replays must reproduce it."""
        h = hashlib.sha256()
        for group in sorted(self.validators):
            h.update(group.to_bytes(2, "big"))
            h.update(state_root(self.validators[group].state))
        return h.hexdigest()


class ScenarioRunner:
    def __init__(self, seed: int, gas_config: Optional[GasConfig] = None):
        self.seed = seed
        self.contract = deploy(gas_config or default_gas_config())
        self.result = ScenarioResult(
            contract=self.contract, validators={}, users={}
        )
        self._addresses: dict[str, bytes] = {}
        self._pending_new: dict[GroupId, dict[str, int]] = {}

    # -- identity -------------------------------------------------------

    def user(self, name: str) -> ScenarioUser:
        existing = self.result.users.get(name)
        if existing is not None:
            return existing
        seed = hashlib.sha256(f"scenario/{self.seed}/user/{name}".encode()).digest()
        keypair = Keypair.from_seed(seed)
        user = ScenarioUser(name=name, keypair=keypair, address=keypair.pubkey[:20])
        self.result.users[name] = user
        return user

    def address(self, name: str) -> bytes:
        if name not in self._addresses:
            self._addresses[name] = hashlib.sha256(
                f"scenario/{self.seed}/addr/{name}".encode()
            ).digest()[:20]
        return self._addresses[name]

    def validator(self, group: GroupId) -> Validator:
        try:
            return self.result.validators[group]
        except KeyError:
            raise ScenarioError(f"group {group} has no validator") from None

    # -- account resolution ----------------------------------------------

    def account_of(self, group: GroupId, name: str) -> int:
        user = self.user(name)
        validator = self.validator(group)
        index = validator.state.account_of_address(user.address)
        if index is not None:
            return index
        pending = self._pending_new.setdefault(group, {})
        if name in pending:
            return pending[name]
        index = validator.next_account_index() + len(pending)
        pending[name] = index
        return index

    def _has_account(self, group: GroupId, name: str) -> bool:
        user = self.user(name)
        validator = self.validator(group)
        return validator.state.account_of_address(user.address) is not None

    # -- actions ---------------------------------------------------------

    def run_action(self, action: dict[str, Any], index: int) -> None:
        op = action.get("op")
        handler = getattr(self, f"_do_{op}", None)
        if handler is None:
            raise ScenarioError(f"unknown action op {op!r}", index)
        try:
            handler(action)
        except RollupError as exc:
            raise ScenarioError(str(exc), index) from exc

    def _do_create_group(self, action: dict[str, Any]) -> None:
        governor = self.address(action.get("governor", "governor"))
        validator_name = action.get("validator", f"validator{len(self.contract.groups)}")
        validator_addr = self.address(validator_name)
        data_mode = DataMode(action.get("data_mode", "zk_rollup"))
        group = self.contract.create_group(
            governor, bool(action.get("permissioned", False)), data_mode, validator_addr
        )
        self.result.validators[group] = Validator(self.contract, group, validator_addr)
        self.result.block_pubdata[group] = []
        self.result.block_roots[group] = []

    def _do_whitelist(self, action: dict[str, Any]) -> None:
        group = action["group"]
        governor = self.contract.groups[group].governor
        self.contract.set_whitelist(
            governor, group, self.user(action["user"]).address, bool(action["allowed"])
        )

    def _do_deposit(self, action: dict[str, Any]) -> None:
        user = self.user(action["user"])
        self.contract.deposit(
            user.address, action["group"], action.get("token", 0), action["amount"]
        )

    def _do_register_key(self, action: dict[str, Any]) -> None:
        group = action["group"]
        user = self.user(action["user"])
        validator = self.validator(group)
        account = validator.state.account_of_address(user.address)
        if account is None:
            raise ScenarioError(f"user {user.name} has no account in group {group}")
        tx = Transaction(
            kind=TxKind.CHANGE_PUBKEY,
            group=group,
            account=account,
            new_pubkey=user.keypair.pubkey,
            fee=action.get("fee", 0),
            nonce=validator.expected_nonce(account),
        )
        self._submit(group, sign_transaction(user.keypair, tx))

    def _do_submit_tx(self, action: dict[str, Any]) -> None:
        group = action["group"]
        kind = TxKind[action["kind"].upper()]
        validator = self.validator(group)
        sender = self.user(action["from"])
        account = validator.state.account_of_address(sender.address)
        if account is None:
            raise ScenarioError(f"user {sender.name} has no account in group {group}")
        nonce = validator.expected_nonce(account)
        common = dict(
            group=group,
            account=account,
            token=action.get("token", 0),
            amount=action.get("amount", 0),
            fee=action.get("fee", 0),
            nonce=nonce,
        )
        if kind == TxKind.TRANSFER:
            to_account = validator.state.account_of_address(
                self.user(action["to"]).address
            )
            if to_account is None:
                raise ScenarioError(f"recipient {action['to']} has no account")
            tx = Transaction(kind=kind, to_account=to_account, **common)
        elif kind == TxKind.TRANSFER_TO_NEW:
            recipient = self.user(action["to"])
            tx = Transaction(
                kind=kind,
                to_account=self.account_of(group, recipient.name),
                target=recipient.address,
                **common,
            )
        elif kind in (TxKind.WITHDRAW, TxKind.CHANGE_GROUP):
            extra: dict[str, Any] = {"target": sender.address}
            if kind == TxKind.CHANGE_GROUP:
                extra.update(
                    source_group=group, destination_group=action["destination"]
                )
            tx = Transaction(kind=kind, **common, **extra)
        elif kind == TxKind.MINT_NFT:
            recipient = self.user(action["to"])
            to_account = validator.state.account_of_address(recipient.address)
            if to_account is None:
                raise ScenarioError(f"recipient {action['to']} has no account")
            content = hashlib.sha256(
                f"nft/{self.seed}/{action.get('content', '')}".encode()
            ).digest()
            tx = Transaction(
                kind=kind, to_account=to_account, content_hash=content, **common
            )
        elif kind == TxKind.WITHDRAW_NFT:
            tx = Transaction(kind=kind, target=sender.address, **common)
        elif kind == TxKind.SWAP:
            other = self.user(action["to"])
            to_account = validator.state.account_of_address(other.address)
            if to_account is None:
                raise ScenarioError(f"counterparty {action['to']} has no account")
            tx = Transaction(
                kind=kind,
                to_account=to_account,
                token_b=action.get("token_b", 1),
                amount_b=action.get("amount_b", 0),
                nonce_b=validator.expected_nonce(to_account),
                **common,
            )
            stx = countersign(sign_transaction(sender.keypair, tx), other.keypair)
            self._submit(group, stx)
            return
        else:
            raise ScenarioError(f"{kind.name} cannot be submitted via the mempool")
        self._submit(group, sign_transaction(sender.keypair, tx))

    def _do_request_exit(self, action: dict[str, Any]) -> None:
        group = action["group"]
        user = self.user(action["user"])
        kind = TxKind[action.get("kind", "full_exit").upper()]
        validator = self.validator(group)
        account = validator.state.account_of_address(user.address)
        if account is None:
            raise ScenarioError(f"user {user.name} has no account in group {group}")
        self.contract.request_full_exit(
            user.address,
            group,
            account,
            action.get("token", 0),
            kind=kind,
            destination_group=action.get("destination"),
        )

    def _do_run_cycle(self, action: dict[str, Any]) -> None:
        group = action["group"]
        validator = self.validator(group)
        before = len(validator.block_history)
        report = validator.run_cycle(
            n_blocks=action.get("blocks", 1),
            capacity_chunks=action.get("capacity", 26),
            aggregate_n=action.get("aggregate", 1),
            n_workers=action.get("workers", 1),
        )
        self.result.cycle_rows.extend(report.rows)
        self._pending_new.pop(group, None)
        for block in validator.block_history[before:]:
            self.result.block_pubdata[group].append(block.pubdata)
            self.result.block_roots[group].append(block.new_root)

    def _do_withdraw_pending(self, action: dict[str, Any]) -> None:
        user = self.user(action["user"])
        self.contract.withdraw_pending(user.address, action.get("token", 0))

    def _submit(self, group: GroupId, stx: SignedTransaction) -> None:
        reason = self.validator(group).submit_tx(stx)
        if reason is not None:
            raise ScenarioError(f"transaction rejected: {reason.value}")


def run_scenario(
    scenario: dict[str, Any] | str | Path,
    seed: Optional[int] = None,
    gas_config: Optional[GasConfig] = None,
) -> ScenarioResult:
    """Execute a scenario dict or file; deterministic given the seed."""
    if isinstance(scenario, (str, Path)):
        try:
            scenario = json.loads(Path(scenario).read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(scenario, dict) or "actions" not in scenario:
        raise ScenarioError("scenario must be an object with an 'actions' list")
    runner = ScenarioRunner(
        seed if seed is not None else scenario.get("seed", 0), gas_config
    )
    for index, action in enumerate(scenario["actions"]):
        runner.run_action(action, index)
    return runner.result


# -- random scenario generation (property tests and the CLI demo) --------


def random_scenario(seed: int) -> dict[str, Any]:
    """A small randomized but always-admissible scenario."""
    rng = random.Random(seed)
    users = [f"u{i}" for i in range(rng.randint(2, 4))]
    two_groups = rng.random() < 0.5
    permissioned = rng.random() < 0.3
    actions: list[dict[str, Any]] = [
        {"op": "create_group", "permissioned": permissioned, "validator": "v0"}
    ]
    if two_groups:
        actions.append(
            {"op": "create_group", "permissioned": False, "validator": "v1"}
        )
    if permissioned:
        for name in users:
            actions.append(
                {"op": "whitelist", "group": 0, "user": name, "allowed": True}
            )
    for name in users:
        actions.append(
            {
                "op": "deposit",
                "group": 0,
                "user": name,
                "token": 0,
                "amount": rng.randint(500, 2000),
            }
        )
    actions.append({"op": "run_cycle", "group": 0, "blocks": 2, "capacity": 26})
    for name in users:
        actions.append({"op": "register_key", "group": 0, "user": name})
    actions.append({"op": "run_cycle", "group": 0, "blocks": 1, "capacity": 26})

    for _ in range(rng.randint(3, 8)):
        a, b = rng.sample(users, 2)
        roll = rng.random()
        if roll < 0.45:
            actions.append(
                {
                    "op": "submit_tx",
                    "group": 0,
                    "kind": "transfer",
                    "from": a,
                    "to": b,
                    "token": 0,
                    "amount": rng.randint(1, 40),
                    "fee": rng.randint(0, 3),
                }
            )
        elif roll < 0.65:
            actions.append(
                {
                    "op": "submit_tx",
                    "group": 0,
                    "kind": "withdraw",
                    "from": a,
                    "token": 0,
                    "amount": rng.randint(1, 30),
                    "fee": rng.randint(0, 3),
                }
            )
        elif roll < 0.8 and two_groups:
            actions.append(
                {
                    "op": "submit_tx",
                    "group": 0,
                    "kind": "change_group",
                    "from": a,
                    "destination": 1,
                    "token": 0,
                    "amount": rng.randint(1, 30),
                    "fee": rng.randint(0, 3),
                }
            )
        else:
            actions.append(
                {
                    "op": "submit_tx",
                    "group": 0,
                    "kind": "mint_nft",
                    "from": a,
                    "to": b,
                    "fee": rng.randint(0, 3),
                }
            )
    actions.append({"op": "run_cycle", "group": 0, "blocks": 2, "capacity": 26})
    if two_groups:
        actions.append({"op": "run_cycle", "group": 1, "blocks": 1, "capacity": 26})
    if rng.random() < 0.5:
        actions.append(
            {"op": "request_exit", "group": 0, "user": users[0], "kind": "full_exit"}
        )
        actions.append({"op": "run_cycle", "group": 0, "blocks": 1, "capacity": 26})
        actions.append({"op": "withdraw_pending", "user": users[0], "token": 0})
    return {"seed": seed, "actions": actions}
