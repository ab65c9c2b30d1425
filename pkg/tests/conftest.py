import hashlib

import pytest

from rollupsim.contract import ContractState, DataMode, deploy
from rollupsim.pipeline import Validator
from rollupsim.signing import Keypair, sign_transaction
from rollupsim.types import Transaction, TxKind


def addr(tag: str) -> bytes:
    return hashlib.sha256(f"addr/{tag}".encode()).digest()[:20]


def keypair(tag: str) -> Keypair:
    return Keypair.from_seed(hashlib.sha256(f"key/{tag}".encode()).digest())


class Harness:
    """One deployed contract with one open group, two funded users with
    registered keys, and the group's validator."""

    def __init__(self, permissioned: bool = False, n_groups: int = 1, **deploy_kwargs):
        self.contract: ContractState = deploy(**deploy_kwargs)
        self.governor = addr("governor")
        self.validators: list[Validator] = []
        for i in range(n_groups):
            vaddr = addr(f"validator{i}")
            group = self.contract.create_group(
                self.governor, permissioned and i == 0, DataMode.ZK_ROLLUP, vaddr
            )
            self.validators.append(Validator(self.contract, group, vaddr))
        self.validator = self.validators[0]
        self.group = self.validator.group
        self.keys = {name: keypair(name) for name in ("alice", "bob")}
        self.addresses = {n: k.pubkey[:20] for n, k in self.keys.items()}

    def whitelist(self, name: str, allowed: bool = True) -> None:
        self.contract.set_whitelist(
            self.governor, self.group, self.addresses[name], allowed
        )

    def fund(self, amount: int = 10**6, tokens=(0, 1)) -> None:
        """Deposit, run a cycle, then register each user's key."""
        for name in self.keys:
            for token in tokens:
                self.contract.deposit(self.addresses[name], self.group, token, amount)
        self.validator.run_cycle(1, 78, 1)
        for name in self.keys:
            account = self.account(name)
            tx = Transaction(
                kind=TxKind.CHANGE_PUBKEY,
                group=self.group,
                account=account,
                new_pubkey=self.keys[name].pubkey,
                nonce=self.validator.expected_nonce(account),
            )
            assert self.submit(name, tx) is None
        self.validator.run_cycle(1, 26, 1)

    def account(self, name: str) -> int:
        index = self.validator.state.account_of_address(self.addresses[name])
        assert index is not None, f"{name} has no account"
        return index

    def submit(self, name: str, tx: Transaction):
        return self.validator.submit_tx(sign_transaction(self.keys[name], tx))

    def transfer(self, sender: str, recipient: str, amount: int, fee: int = 0):
        account = self.account(sender)
        return Transaction(
            kind=TxKind.TRANSFER,
            group=self.group,
            account=account,
            to_account=self.account(recipient),
            token=0,
            amount=amount,
            fee=fee,
            nonce=self.validator.expected_nonce(account),
        )


@pytest.fixture
def harness() -> Harness:
    h = Harness()
    h.fund()
    return h


@pytest.fixture
def harness2() -> Harness:
    h = Harness(n_groups=2)
    h.fund()
    return h
