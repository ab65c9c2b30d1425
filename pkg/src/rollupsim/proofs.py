"""Mock proof backend: honest re-execution checks, binding commitments,
hash aggregation, and the circuit-size estimator.

No real zero-knowledge proving happens here.  Every condition a real
circuit would enforce is checked by re-executing the block, and a proof
is a hash binding of the public input to the verified transition.  The
public input is (block hash + group id) mod 2^256 so the verifier can
rebuild it from the commitment and the caller's registered group.
"""

from __future__ import annotations

import bisect
import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .encoding import encode_block_pubdata
from .signing import verify_signature
from .state import ApplyContext, GroupState, apply_transaction, state_root
from .types import (
    CHUNK_BYTES,
    PRIORITY_KINDS,
    WITHDRAWAL_KINDS,
    Block,
    GroupId,
    RollupError,
    SignedTransaction,
    TxKind,
)

PI_MODULUS = 1 << 256
_PROOF_TAG = b"rollupsim/block-proof/v1"
_AGG_TAG = b"rollupsim/aggregate/v1"


def block_hash(old_root: bytes, new_root: bytes, number: int, pubdata: bytes) -> bytes:
    return hashlib.sha256(
        old_root + new_root + number.to_bytes(8, "big") + pubdata
    ).digest()


def public_input(h_block: bytes, group: GroupId) -> int:
    return (int.from_bytes(h_block, "big") + group) % PI_MODULUS


class Violation(Enum):
    BAD_SIGNATURE = "a signature does not verify for the claimed group"
    GROUP_MISMATCH = "transactions carry mixed or foreign group ids"
    WRONG_NEW_ROOT = "re-execution does not reach the claimed new root"
    PUBDATA_MISMATCH = "published pubdata does not match re-execution"
    WHITELIST = "whitelist policy violated in a permissioned group"
    EXECUTION_FAILED = "a transaction is not applicable to the old state"


class ProverRefused(RollupError):
    def __init__(self, violation: Violation):
        super().__init__(f"refusing to prove: {violation.value}")
        self.violation = violation


@dataclass(slots=True)
class WhitelistPolicy:
    """Snapshot of a permissioned group's whitelist at proving time."""

    permissioned: bool = False
    allowed: frozenset[bytes] = frozenset()

    def permits(self, stx: SignedTransaction, sender_address: bytes) -> bool:
        if not self.permissioned or sender_address in self.allowed:
            return True
        # De-whitelisted users keep withdrawal rights only.
        return stx.tx.kind in WITHDRAWAL_KINDS or stx.tx.kind == TxKind.NOOP


@dataclass(slots=True)
class BlockWitness:
    """Everything the prover needs to re-execute one block."""

    group: GroupId
    block: Block
    initial_state: GroupState
    policy: WhitelistPolicy = field(default_factory=WhitelistPolicy)


@dataclass(frozen=True, slots=True)
class BlockProof:
    public_input: int
    old_root: bytes
    new_root: bytes
    binding: bytes


@dataclass(frozen=True, slots=True)
class AggregatedProof:
    proofs: tuple[BlockProof, ...]
    binding: bytes


def _binding(pi: int, old_root: bytes, new_root: bytes) -> bytes:
    return hashlib.sha256(
        _PROOF_TAG + pi.to_bytes(32, "big") + old_root + new_root
    ).digest()


def check_block(witness: BlockWitness) -> Optional[Violation]:
    """Re-run every in-circuit condition; None means the block is honest."""
    block = witness.block
    state = witness.initial_state.copy()
    if state_root(state) != block.old_root:
        return Violation.WRONG_NEW_ROOT

    for stx in block.transactions:
        if stx.tx.group != witness.group:
            return Violation.GROUP_MISMATCH
        if stx.tx.kind not in PRIORITY_KINDS and stx.tx.kind != TxKind.NOOP:
            if not verify_signature(stx):
                return Violation.BAD_SIGNATURE

    effective = []
    for stx in block.transactions:
        if stx.tx.kind in PRIORITY_KINDS:
            sender_address = stx.tx.target  # L1-side owner
        else:
            sender = state.accounts.get(stx.tx.account)
            sender_address = sender.l1_address if sender else stx.tx.target
        if not witness.policy.permits(stx, sender_address):
            return Violation.WHITELIST
        if not _signer_owns_account(state, stx):
            return Violation.BAD_SIGNATURE
        try:
            result = apply_transaction(
                state, stx, ApplyContext(check_signatures=False, fill=True)
            )
        except RollupError:
            return Violation.EXECUTION_FAILED
        effective.append(result.tx)

    if state_root(state) != block.new_root:
        return Violation.WRONG_NEW_ROOT
    try:
        expected_pubdata = encode_block_pubdata(effective, block.capacity_chunks)
    except RollupError:
        return Violation.PUBDATA_MISMATCH
    if expected_pubdata != block.pubdata:
        return Violation.PUBDATA_MISMATCH
    return None


def _signer_owns_account(state: GroupState, stx: SignedTransaction) -> bool:
    """Signatures are valid Ed25519 by now; bind them to account keys."""
    tx = stx.tx
    if tx.kind in PRIORITY_KINDS or tx.kind == TxKind.NOOP:
        return True
    if tx.kind == TxKind.CHANGE_PUBKEY:
        return stx.signer_pubkey == tx.new_pubkey
    sender = state.accounts.get(tx.account)
    if sender is None or sender.l2_pubkey != stx.signer_pubkey:
        return False
    if tx.kind == TxKind.SWAP:
        party_b = state.accounts.get(tx.to_account)
        if party_b is None or party_b.l2_pubkey != stx.second_signer_pubkey:
            return False
    return True


def make_block_proof(witness: BlockWitness) -> BlockProof:
    """Honest prover: refuses any witness failing check_block."""
    violation = check_block(witness)
    if violation is not None:
        raise ProverRefused(violation)
    block = witness.block
    h = block_hash(block.old_root, block.new_root, block.number, block.pubdata)
    pi = public_input(h, witness.group)
    return BlockProof(
        public_input=pi,
        old_root=block.old_root,
        new_root=block.new_root,
        binding=_binding(pi, block.old_root, block.new_root),
    )


def verify_block_proof(proof: BlockProof, expected_pi: int) -> bool:
    if proof.public_input != expected_pi:
        return False
    return proof.binding == _binding(proof.public_input, proof.old_root, proof.new_root)


def aggregate_proofs(proofs: Sequence[BlockProof]) -> AggregatedProof:
    if not proofs:
        raise RollupError("cannot aggregate an empty proof list")
    binding = hashlib.sha256(_AGG_TAG + b"".join(p.binding for p in proofs)).digest()
    return AggregatedProof(proofs=tuple(proofs), binding=binding)


def verify_aggregate(agg: AggregatedProof, expected_pis: Sequence[int]) -> bool:
    """True iff every inner proof verifies against its expected public
    input, in order, and the aggregate binding is consistent."""
    if len(agg.proofs) != len(expected_pis):
        return False
    for proof, pi in zip(agg.proofs, expected_pis):
        if not verify_block_proof(proof, pi):
            return False
    recomputed = hashlib.sha256(
        _AGG_TAG + b"".join(p.binding for p in agg.proofs)
    ).digest()
    return recomputed == agg.binding


# Circuit-size model: measured constraint counts at the four supported
# block sizes; other sizes interpolate linearly between bracketing rows.
_CHUNK_POINTS = (26, 78, 182, 390)
_CONSTRAINTS = {
    "baseline": (8_526_701, 16_908_690, 33_672_019, 67_185_536),
    "modified": (8_542_124, 16_952_713, 33_773_242, 67_401_159),
}
# Measured proving seconds at the same block sizes, for reporting only.
PROVE_SECONDS = {
    "baseline": {26: 71.0, 78: 142.0, 182: 289.0, 390: 588.0},
    "modified": {26: 71.0, 78: 144.0, 182: 289.0, 390: 588.0},
}


def estimate_constraints(block_chunks: int, variant: str = "modified") -> int:
    """Constraint count of the state-transition circuit for a block size."""
    if block_chunks <= 0:
        raise ValueError("block_chunks must be positive")
    if variant not in _CONSTRAINTS:
        raise ValueError(f"unknown variant {variant!r}")
    ys = _CONSTRAINTS[variant]
    xs = _CHUNK_POINTS
    if block_chunks in xs:
        return ys[xs.index(block_chunks)]
    # clamp to the outermost segment for out-of-range sizes
    hi = min(max(bisect.bisect_left(xs, block_chunks), 1), len(xs) - 1)
    lo = hi - 1
    slope = (ys[hi] - ys[lo]) / (xs[hi] - xs[lo])
    return round(ys[lo] + slope * (block_chunks - xs[lo]))


def simulated_prove_seconds(
    block_chunks: int, variant: str = "modified", scale: float = 1.0
) -> float:
    """Reported proving duration, from the measured table, nearest size."""
    table = PROVE_SECONDS[variant]
    nearest = min(table, key=lambda c: abs(c - block_chunks))
    return table[nearest] * scale


def chunks_of_pubdata(pubdata: bytes) -> int:
    return len(pubdata) // CHUNK_BYTES
