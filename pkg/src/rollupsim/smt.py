"""Sparse Merkle tree over 2^32 virtual leaves.

Empty subtrees use precomputed default hashes per level, so only touched
leaves are materialized.  Node hash is H(0x01 || left || right), leaf
hash is supplied by the caller; H is sha256 throughout the simulator.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

TREE_DEPTH = 32


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return H(b"\x01" + left + right)


def default_hashes(default_leaf: bytes) -> list[bytes]:
    """defaults[d] = hash of an all-default subtree whose root is at level d
    (level 0 = tree root, level TREE_DEPTH = leaves)."""
    defaults = [b""] * (TREE_DEPTH + 1)
    defaults[TREE_DEPTH] = default_leaf
    for d in range(TREE_DEPTH - 1, -1, -1):
        child = defaults[d + 1]
        defaults[d] = node_hash(child, child)
    return defaults


@dataclass(frozen=True, slots=True)
class MerklePath:
    """Sibling hashes from leaf level up to the root."""

    index: int
    siblings: tuple[bytes, ...]  # len == TREE_DEPTH, leaf level first


class SparseTree:
    """Depth-32 sparse Merkle tree; leaves addressed by 32-bit index."""

    def __init__(self, default_leaf: bytes):
        self.defaults = default_hashes(default_leaf)
        self.leaves: dict[int, bytes] = {}

    def set_leaf(self, index: int, leaf_hash: bytes) -> None:
        if leaf_hash == self.defaults[TREE_DEPTH]:
            self.leaves.pop(index, None)
        else:
            self.leaves[index] = leaf_hash

    def get_leaf(self, index: int) -> bytes:
        return self.leaves.get(index, self.defaults[TREE_DEPTH])

    def _levels(self) -> list[dict[int, bytes]]:
        """Non-default node maps from leaf level up to the root."""
        levels = [dict(self.leaves)]
        current = levels[0]
        for d in range(TREE_DEPTH, 0, -1):
            parent: dict[int, bytes] = {}
            default_child = self.defaults[d]
            for pos in {p >> 1 for p in current}:
                left = current.get(2 * pos, default_child)
                right = current.get(2 * pos + 1, default_child)
                parent[pos] = node_hash(left, right)
            levels.append(parent)
            current = parent
        return levels

    def root(self) -> bytes:
        if not self.leaves:
            return self.defaults[0]
        return self._levels()[-1].get(0, self.defaults[0])

    def prove(self, index: int) -> MerklePath:
        levels = self._levels()
        siblings = []
        pos = index
        for d in range(TREE_DEPTH):
            sibling = levels[d].get(pos ^ 1, self.defaults[TREE_DEPTH - d])
            siblings.append(sibling)
            pos >>= 1
        return MerklePath(index=index, siblings=tuple(siblings))

    def copy(self) -> "SparseTree":
        clone = SparseTree.__new__(SparseTree)
        clone.defaults = self.defaults
        clone.leaves = dict(self.leaves)
        return clone


def verify_path(root: bytes, leaf_hash: bytes, path: MerklePath) -> bool:
    acc = leaf_hash
    pos = path.index
    for sibling in path.siblings:
        if pos & 1:
            acc = node_hash(sibling, acc)
        else:
            acc = node_hash(acc, sibling)
        pos >>= 1
    return acc == root
