"""Multi-group zk-rollup engine with a simulated layer-1 contract.

Many independent account groups share one deployed contract, one proving
pipeline, and one priority queue namespace; two dedicated transaction
types move funds between groups in a single rollup operation.
"""

from .contract import ContractState, DataMode, GroupConfig, deploy
from .gasmodel import GasConfig, default_gas_config, load_gas_config
from .pipeline import CycleReport, CycleRow, Validator
from .proofs import (
    BlockProof,
    BlockWitness,
    WhitelistPolicy,
    check_block,
    estimate_constraints,
    make_block_proof,
    verify_block_proof,
)
from .reporting import CostReport, compare_changegroup, model_cost_report
from .scenario import run_scenario
from .signing import Keypair, countersign, sign_transaction, verify_signature
from .state import GroupState, apply_transaction, replay_pubdata, state_root
from .types import Block, SignedTransaction, Transaction, TxKind

__version__ = "0.1.0"

__all__ = [
    "Block",
    "BlockProof",
    "BlockWitness",
    "ContractState",
    "CostReport",
    "CycleReport",
    "CycleRow",
    "DataMode",
    "GasConfig",
    "GroupConfig",
    "GroupState",
    "Keypair",
    "SignedTransaction",
    "Transaction",
    "TxKind",
    "Validator",
    "WhitelistPolicy",
    "apply_transaction",
    "check_block",
    "compare_changegroup",
    "countersign",
    "default_gas_config",
    "deploy",
    "estimate_constraints",
    "load_gas_config",
    "make_block_proof",
    "model_cost_report",
    "replay_pubdata",
    "run_scenario",
    "sign_transaction",
    "state_root",
    "verify_block_proof",
    "verify_signature",
]
