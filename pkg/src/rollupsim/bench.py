"""Random-workload benchmark over the block-size / aggregation matrix.

A bench cell deploys a fresh contract, funds a set of users, generates a
transaction mix filling ``aggregate_n`` blocks of the requested chunk
capacity, runs one full commit/prove/execute cycle, and attributes the
metered gas to individual transactions with exact fractions.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .contract import ContractState, DataMode, deploy
from .gasmodel import (
    CATEGORIES,
    CATEGORY_COMMIT_BASE,
    CATEGORY_COMMIT_EXTRA,
    CATEGORY_EXECUTION_BASE,
    CATEGORY_EXECUTION_EXTRA,
    CATEGORY_EXTERNAL,
    CATEGORY_PROVE_BASE,
    GasConfig,
    default_gas_config,
)
from .pipeline import Validator
from .reporting import (
    VALIDATOR_ROW,
    CostReport,
    _add_headlines,
    _external_cost,
)
from .signing import Keypair, countersign, sign_transaction
from .state import NFT_TOKEN_FLOOR
from .types import (
    ONCHAIN_KINDS,
    PRIORITY_KINDS,
    Block,
    SignedTransaction,
    Transaction,
    TxKind,
    chunk_count,
)

DEFAULT_MIX = {
    TxKind.TRANSFER: 55,
    TxKind.TRANSFER_TO_NEW: 10,
    TxKind.WITHDRAW: 10,
    TxKind.DEPOSIT: 10,
    TxKind.MINT_NFT: 5,
    TxKind.SWAP: 5,
    TxKind.CHANGE_GROUP: 5,
}

FUND_AMOUNT = 10**9  # per token, comfortably above any generated spend


def parse_mix(spec: str) -> dict[TxKind, int]:
    """Parse "transfer=70,withdraw=20,deposit=10" into a weight map."""
    mix: dict[TxKind, int] = {}
    for part in spec.split(","):
        name, _, weight = part.partition("=")
        try:
            kind = TxKind[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown transaction type {name!r}") from None
        mix[kind] = int(weight) if weight else 1
    if not mix:
        raise ValueError("empty transaction mix")
    return mix


@dataclass(slots=True)
class BenchUser:
    name: str
    keypair: Keypair
    address: bytes

    @classmethod
    def make(cls, name: str, salt: int) -> "BenchUser":
        seed = hashlib.sha256(f"bench-user/{salt}/{name}".encode()).digest()
        keypair = Keypair.from_seed(seed)
        return cls(name=name, keypair=keypair, address=keypair.pubkey[:20])


@dataclass(slots=True)
class TxAttribution:
    kind: TxKind
    block: int
    costs: dict[str, Fraction]

    def total(self) -> Fraction:
        return sum(self.costs.values(), Fraction(0))


@dataclass(slots=True)
class BenchResult:
    report: CostReport
    attributions: list[TxAttribution]
    phase_gas: dict[str, int]  # metered gas per category during the cycle
    blocks: list[Block]
    contract: ContractState
    validator: Validator


def _address(tag: str, salt: int) -> bytes:
    return hashlib.sha256(f"bench-addr/{salt}/{tag}".encode()).digest()[:20]


class _WorkloadBuilder:
    """Generates an admissible transaction mix against a live validator."""

    def __init__(
        self,
        contract: ContractState,
        validator: Validator,
        users: list[BenchUser],
        rng: random.Random,
        destination_group: Optional[int] = None,
    ):
        self.contract = contract
        self.validator = validator
        self.users = users
        self.rng = rng
        self.destination_group = destination_group
        self._next_fresh = 0

    def _account_of(self, user: BenchUser) -> Optional[int]:
        return self.validator.state.account_of_address(user.address)

    def _signed(self, user: BenchUser, tx: Transaction) -> SignedTransaction:
        return sign_transaction(user.keypair, tx)

    def _amount(self) -> int:
        return self.rng.randint(1, 1000)

    def _fee(self) -> int:
        return self.rng.randint(0, 50)

    def generate(self, kind: TxKind) -> Optional[int]:
        """Emit one tx of ``kind``; returns its chunk cost or None if the
        kind is not generatable right now."""
        group = self.validator.group
        make = getattr(self, f"_gen_{kind.name.lower()}", None)
        if make is None:
            return None
        stx_or_none = make(group)
        if stx_or_none is None:
            return None
        return chunk_count(kind)

    def _gen_deposit(self, group: int):
        user = self.rng.choice(self.users)
        self.contract.deposit(user.address, group, self.rng.choice((0, 1)), self._amount())
        return True

    def _gen_transfer(self, group: int):
        a, b = self.rng.sample(self.users, 2)
        acc_a, acc_b = self._account_of(a), self._account_of(b)
        if acc_a is None or acc_b is None:
            return None
        tx = Transaction(
            kind=TxKind.TRANSFER,
            group=group,
            account=acc_a,
            to_account=acc_b,
            token=self.rng.choice((0, 1)),
            amount=self._amount(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
        )
        return self._submit(self._signed(a, tx))

    def _gen_transfer_to_new(self, group: int):
        a = self.rng.choice(self.users)
        acc_a = self._account_of(a)
        if acc_a is None:
            return None
        fresh = _address(f"fresh-{self._next_fresh}", id(self) & 0xFFFF)
        self._next_fresh += 1
        pending_new = sum(
            1
            for stx in self.validator.mempool
            if stx.tx.kind == TxKind.TRANSFER_TO_NEW
        )
        tx = Transaction(
            kind=TxKind.TRANSFER_TO_NEW,
            group=group,
            account=acc_a,
            to_account=self.validator.next_account_index() + pending_new,
            token=self.rng.choice((0, 1)),
            amount=self._amount(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
            target=fresh,
        )
        return self._submit(self._signed(a, tx))

    def _gen_withdraw(self, group: int):
        a = self.rng.choice(self.users)
        acc_a = self._account_of(a)
        if acc_a is None:
            return None
        tx = Transaction(
            kind=TxKind.WITHDRAW,
            group=group,
            account=acc_a,
            token=self.rng.choice((0, 1)),
            amount=self._amount(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
            target=a.address,
        )
        return self._submit(self._signed(a, tx))

    def _gen_mint_nft(self, group: int):
        a, b = self.rng.sample(self.users, 2)
        acc_a, acc_b = self._account_of(a), self._account_of(b)
        if acc_a is None or acc_b is None:
            return None
        tx = Transaction(
            kind=TxKind.MINT_NFT,
            group=group,
            account=acc_a,
            to_account=acc_b,
            content_hash=hashlib.sha256(self.rng.randbytes(8)).digest(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
        )
        return self._submit(self._signed(a, tx))

    def _gen_withdraw_nft(self, group: int):
        for user in self.rng.sample(self.users, len(self.users)):
            account = self._account_of(user)
            if account is None:
                continue
            leaf = self.validator.state.accounts.get(account)
            if leaf is None:
                continue
            nfts = [t for t, a in leaf.balances.items() if t >= NFT_TOKEN_FLOOR and a]
            if not nfts:
                continue
            tx = Transaction(
                kind=TxKind.WITHDRAW_NFT,
                group=group,
                account=account,
                token=nfts[0],
                fee=self._fee(),
                nonce=self.validator.expected_nonce(account),
                target=user.address,
            )
            return self._submit(self._signed(user, tx))
        return None

    def _gen_swap(self, group: int):
        a, b = self.rng.sample(self.users, 2)
        acc_a, acc_b = self._account_of(a), self._account_of(b)
        if acc_a is None or acc_b is None:
            return None
        tx = Transaction(
            kind=TxKind.SWAP,
            group=group,
            account=acc_a,
            to_account=acc_b,
            token=0,
            token_b=1,
            amount=self._amount(),
            amount_b=self._amount(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
            nonce_b=self.validator.expected_nonce(acc_b),
        )
        return self._submit(countersign(self._signed(a, tx), b.keypair))

    def _gen_change_pubkey(self, group: int):
        a = self.rng.choice(self.users)
        acc_a = self._account_of(a)
        if acc_a is None:
            return None
        tx = Transaction(
            kind=TxKind.CHANGE_PUBKEY,
            group=group,
            account=acc_a,
            new_pubkey=a.keypair.pubkey,
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
        )
        return self._submit(self._signed(a, tx))

    def _gen_change_group(self, group: int):
        if self.destination_group is None:
            return None
        a = self.rng.choice(self.users)
        acc_a = self._account_of(a)
        if acc_a is None:
            return None
        tx = Transaction(
            kind=TxKind.CHANGE_GROUP,
            group=group,
            account=acc_a,
            token=self.rng.choice((0, 1)),
            amount=self._amount(),
            fee=self._fee(),
            nonce=self.validator.expected_nonce(acc_a),
            target=a.address,
            source_group=group,
            destination_group=self.destination_group,
        )
        return self._submit(self._signed(a, tx))

    def _submit(self, stx: SignedTransaction):
        reason = self.validator.submit_tx(stx)
        if reason is not None:
            raise RuntimeError(f"generated tx rejected: {reason}")
        return True


def bench_cell(
    capacity_chunks: int,
    aggregate_n: int,
    mix: Optional[dict[TxKind, int]] = None,
    gas_config: Optional[GasConfig] = None,
    seed: int = 0,
    n_users: int = 6,
) -> BenchResult:
    """Run one cell of the benchmark matrix and attribute its gas."""
    mix = dict(mix or DEFAULT_MIX)
    gas_config = gas_config or default_gas_config()
    rng = random.Random(seed)

    contract = deploy(gas_config)
    governor = _address("governor", seed)
    validator_addr = _address("validator", seed)
    group = contract.create_group(governor, False, DataMode.ZK_ROLLUP, validator_addr)
    destination_group: Optional[int] = None
    if TxKind.CHANGE_GROUP in mix or TxKind.FULL_CHANGE_GROUP in mix:
        destination_group = contract.create_group(
            _address("governor2", seed), False, DataMode.ZK_ROLLUP,
            _address("validator2", seed),
        )
    validator = Validator(contract, group, validator_addr)
    users = [BenchUser.make(f"user{i}", seed) for i in range(n_users)]

    # Funding and key registration; not part of the measured cycle.
    for user in users:
        contract.deposit(user.address, group, 0, FUND_AMOUNT)
        contract.deposit(user.address, group, 1, FUND_AMOUNT)
    validator.run_cycle(n_blocks=1, capacity_chunks=390, aggregate_n=1)
    builder = _WorkloadBuilder(contract, validator, users, rng, destination_group)
    for user in users:
        account = validator.state.account_of_address(user.address)
        tx = Transaction(
            kind=TxKind.CHANGE_PUBKEY,
            group=group,
            account=account,
            new_pubkey=user.keypair.pubkey,
            nonce=0,
        )
        builder._submit(sign_transaction(user.keypair, tx))
    if TxKind.WITHDRAW_NFT in mix:
        for user in users[:2]:
            builder._gen_mint_nft(group)
    validator.run_cycle(n_blocks=1, capacity_chunks=390, aggregate_n=1)

    # Measured workload: fill aggregate_n blocks of the target capacity.
    budget = capacity_chunks * aggregate_n
    used = 0
    kinds = list(mix)
    weights = [mix[k] for k in kinds]
    min_chunks = min(chunk_count(k) for k in kinds)
    misses = 0
    while used + min_chunks <= budget and misses < 200:
        kind = rng.choices(kinds, weights)[0]
        if used + chunk_count(kind) > budget:
            misses += 1
            continue
        got = builder.generate(kind)
        if got is None:
            misses += 1
            continue
        used += got

    charges_before = len(contract.gas_meter.charges)
    report_cycle = validator.run_cycle(
        n_blocks=aggregate_n, capacity_chunks=capacity_chunks, aggregate_n=aggregate_n
    )
    cycle_charges = contract.gas_meter.charges[charges_before:]
    phase_gas = {cat: 0 for cat in CATEGORIES}
    for charge in cycle_charges:
        phase_gas[charge.category] += charge.gas

    blocks = report_cycle.blocks
    attributions = _attribute(blocks, phase_gas, gas_config, capacity_chunks)

    report = CostReport(
        capacity_chunks=capacity_chunks, aggregate_n=aggregate_n, mode=gas_config.mode
    )
    sums: dict[str, dict[str, Fraction]] = {}
    counts: dict[str, int] = {}
    for att in attributions:
        name = att.kind.name if att.kind != TxKind.NOOP else VALIDATOR_ROW
        row = sums.setdefault(name, {cat: Fraction(0) for cat in CATEGORIES})
        for cat, value in att.costs.items():
            row[cat] += value
        counts[name] = counts.get(name, 0) + 1
    for name, row in sums.items():
        divisor = counts[name] if name != VALIDATOR_ROW else 1
        report.rows[name] = {cat: float(v / divisor) for cat, v in row.items()}
        report.counts[name] = counts[name]
    _add_headlines(report)

    return BenchResult(
        report=report,
        attributions=attributions,
        phase_gas=phase_gas,
        blocks=blocks,
        contract=contract,
        validator=validator,
    )


def _attribute(
    blocks: list[Block],
    phase_gas: dict[str, int],
    config: GasConfig,
    capacity_chunks: int,
) -> list[TxAttribution]:
    """Split the metered cycle gas across transactions.

    Base categories follow the chunk-share rule (noops included, charged
    to the validator row); extras are split evenly over their events.
    """
    n = len(blocks)
    commit_block = Fraction(phase_gas[CATEGORY_COMMIT_BASE], n)
    prove_block = Fraction(phase_gas[CATEGORY_PROVE_BASE], n)
    execute_block = Fraction(phase_gas[CATEGORY_EXECUTION_BASE], n)

    extra_events = 0
    onchain_events = 0
    for block in blocks:
        for stx in block.transactions:
            extra_events += int(stx.tx.kind in ONCHAIN_KINDS) + int(
                stx.tx.kind in PRIORITY_KINDS
            )
            onchain_events += int(stx.tx.kind in ONCHAIN_KINDS)
    commit_extra_each = (
        Fraction(phase_gas[CATEGORY_COMMIT_EXTRA], extra_events) if extra_events else 0
    )
    execute_extra_each = (
        Fraction(phase_gas[CATEGORY_EXECUTION_EXTRA], onchain_events)
        if onchain_events
        else 0
    )

    attributions = []
    for block in blocks:
        for stx in block.transactions:
            kind = stx.tx.kind
            share = Fraction(chunk_count(kind), capacity_chunks)
            costs = {cat: Fraction(0) for cat in CATEGORIES}
            costs[CATEGORY_COMMIT_BASE] = share * commit_block
            costs[CATEGORY_PROVE_BASE] = share * prove_block
            costs[CATEGORY_EXECUTION_BASE] = share * execute_block
            events = int(kind in ONCHAIN_KINDS) + int(kind in PRIORITY_KINDS)
            if events:
                costs[CATEGORY_COMMIT_EXTRA] = events * commit_extra_each
            if kind in ONCHAIN_KINDS:
                costs[CATEGORY_EXECUTION_EXTRA] = execute_extra_each
            costs[CATEGORY_EXTERNAL] = Fraction(
                _external_cost(kind, stx.tx.token, config)
            )
            attributions.append(
                TxAttribution(kind=kind, block=block.number, costs=costs)
            )
    return attributions
