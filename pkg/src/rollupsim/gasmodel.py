"""Gas cost model: per-function constants, the meter ledger, and cost
attribution.

Costs fall into six categories: commit base, prove base, execution base,
commit extra, execution extra, and external.  Call costs are affine in
their arguments (base constant + per-byte rate + per-onchain-op
surcharge); the default constants are calibrated so the headline
deployment, group-creation, cross-group and per-transaction ratios hold.

"ETH-like" vs "ERC20-like" is a per-token constant profile: token id 0
uses the ETH constants, every other token the ERC20 constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

from .types import TokenId

CATEGORY_COMMIT_BASE = "commit_base"
CATEGORY_PROVE_BASE = "prove_base"
CATEGORY_EXECUTION_BASE = "execution_base"
CATEGORY_COMMIT_EXTRA = "commit_extra"
CATEGORY_EXECUTION_EXTRA = "execution_extra"
CATEGORY_EXTERNAL = "external"

CATEGORIES = (
    CATEGORY_COMMIT_BASE,
    CATEGORY_PROVE_BASE,
    CATEGORY_EXECUTION_BASE,
    CATEGORY_COMMIT_EXTRA,
    CATEGORY_EXECUTION_EXTRA,
    CATEGORY_EXTERNAL,
)


@dataclass(frozen=True, slots=True)
class GasConfig:
    """Flat gas-constant table; every value is integer gas."""

    mode: str = "modified"  # "modified" (group support) or "baseline"

    deploy: int = 22_904_219
    create_group: int = 184_258
    set_whitelist: int = 25_000

    commit_call_base: int = 150_000
    commit_per_block: int = 500
    commit_per_byte: int = 16
    commit_extra_per_op: int = 5_000

    prove_call_base: int = 352_000

    execute_call_base: int = 50_000
    execute_per_block: int = 10_100
    execute_extra_per_op: int = 30_000

    deposit_eth: int = 61_200
    deposit_erc20: int = 92_800
    withdraw_pending_eth: int = 50_000
    withdraw_pending_erc20: int = 70_000
    full_exit_request: int = 40_200

    def commit_gas(self, n_blocks: int, pubdata_bytes: int) -> int:
        return (
            self.commit_call_base
            + self.commit_per_block * n_blocks
            + self.commit_per_byte * pubdata_bytes
        )

    def prove_gas(self) -> int:
        return self.prove_call_base

    def execute_gas(self, n_blocks: int) -> int:
        return self.execute_call_base + self.execute_per_block * n_blocks

    def deposit_gas(self, token: TokenId) -> int:
        return self.deposit_eth if token == 0 else self.deposit_erc20

    def withdraw_pending_gas(self, token: TokenId) -> int:
        return self.withdraw_pending_eth if token == 0 else self.withdraw_pending_erc20

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


BASELINE_OVERRIDES = {
    "mode": "baseline",
    "deploy": 22_106_772,
    "commit_per_block": 0,
    "prove_call_base": 350_000,
    "execute_per_block": 10_000,
    "deposit_eth": 60_000,
    "deposit_erc20": 90_000,
    "full_exit_request": 40_000,
}


def default_gas_config(mode: str = "modified") -> GasConfig:
    if mode == "modified":
        return GasConfig()
    if mode == "baseline":
        return GasConfig(**BASELINE_OVERRIDES)
    raise ValueError(f"unknown gas mode {mode!r}")


def load_gas_config(path: str | Path) -> GasConfig:
    raw = json.loads(Path(path).read_text())
    known = {f.name for f in fields(GasConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown gas config keys: {sorted(unknown)}")
    return GasConfig(**raw)


@dataclass(frozen=True, slots=True)
class GasCharge:
    function: str
    category: str
    group: int  # -1 for charges not attributable to one group
    gas: int


@dataclass(slots=True)
class GasMeter:
    """Append-only ledger of gas charges."""

    charges: list[GasCharge] = field(default_factory=list)

    def charge(self, function: str, category: str, gas: int, group: int = -1) -> None:
        if category not in CATEGORIES:
            raise ValueError(f"unknown gas category {category!r}")
        self.charges.append(GasCharge(function, category, group, gas))

    def total(self) -> int:
        return sum(c.gas for c in self.charges)

    def total_by(
        self,
        function: str | None = None,
        category: str | None = None,
        group: int | None = None,
    ) -> int:
        return sum(
            c.gas
            for c in self.charges
            if (function is None or c.function == function)
            and (category is None or c.category == category)
            and (group is None or c.group == group)
        )

    def report_rows(self) -> list[tuple[int, str, str, int]]:
        """Deterministic (group, function, category, gas) aggregation."""
        acc: dict[tuple[int, str, str], int] = {}
        for c in self.charges:
            key = (c.group, c.function, c.category)
            acc[key] = acc.get(key, 0) + c.gas
        return [(g, f, cat, gas) for (g, f, cat), gas in sorted(acc.items())]
