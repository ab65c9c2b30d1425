"""Transaction signing behind one small interface.

Ed25519 is the default scheme: deterministic, 32-byte public keys, fast
at test scale.  Only binding and unforgeability matter here; nothing in
the simulator depends on the curve choice.
"""

from __future__ import annotations

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .encoding import signing_bytes
from .types import SignedTransaction, Transaction, TxKind


class Keypair:
    """One user's signing key; ``pubkey`` is the 32-byte rollup identity."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.pubkey: bytes = private.public_key().public_bytes_raw()

    @classmethod
    def generate(cls) -> "Keypair":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "Keypair":
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        return cls(Ed25519PrivateKey.from_private_bytes(seed))

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)


def sign_transaction(keypair: Keypair, tx: Transaction) -> SignedTransaction:
    """Sign the canonical serialization of ``tx`` (group field included)."""
    return SignedTransaction(
        tx=tx, signer_pubkey=keypair.pubkey, signature=keypair.sign(signing_bytes(tx))
    )


def countersign(stx: SignedTransaction, keypair: Keypair) -> SignedTransaction:
    """Attach the second party's signature (Swap only)."""
    from dataclasses import replace

    return replace(
        stx,
        second_signer_pubkey=keypair.pubkey,
        second_signature=keypair.sign(signing_bytes(stx.tx)),
    )


def _verify_one(pubkey: bytes, signature: bytes, message: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def verify_signature(stx: SignedTransaction) -> bool:
    """True iff all required signatures match the canonical serialization."""
    message = signing_bytes(stx.tx)
    if not _verify_one(stx.signer_pubkey, stx.signature, message):
        return False
    if stx.tx.kind == TxKind.SWAP:
        return _verify_one(stx.second_signer_pubkey, stx.second_signature, message)
    return True
