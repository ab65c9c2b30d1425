import hashlib

from hypothesis import given, settings
from hypothesis import strategies as st

from rollupsim import smt

LEAF_DEFAULT = bytes(32)


def leaf(i: int) -> bytes:
    return hashlib.sha256(f"leaf{i}".encode()).digest()


class TestDefaults:
    def test_default_chain_length(self):
        defaults = smt.default_hashes(LEAF_DEFAULT)
        assert len(defaults) == smt.TREE_DEPTH + 1

    def test_default_chain_is_iterated_node_hash(self):
        defaults = smt.default_hashes(LEAF_DEFAULT)
        h = LEAF_DEFAULT
        # defaults[depth] is the leaf level, defaults[0] the root
        assert defaults[smt.TREE_DEPTH] == h
        for level in range(smt.TREE_DEPTH - 1, -1, -1):
            h = smt.node_hash(h, h)
            assert defaults[level] == h


class TestGoldenRoots:
    """Pinned vectors, independently derived by straight-line folding of
    sha256(0x01 || left || right) over the documented leaf encodings."""

    def test_empty_account_tree_root(self):
        from rollupsim.state import empty_root

        assert empty_root().hex() == (
            "7044bb99a7d1f4dd91869e352f35c69cc26befdd1568fa236a715d2aaa2a5257"
        )

    def test_empty_balance_root(self):
        from rollupsim.state import EMPTY_BALANCE_ROOT

        assert EMPTY_BALANCE_ROOT.hex() == (
            "2b8847b425a47fcad5c930e5d9981264ed09a331a20e65e8790c8f105fb75e40"
        )

    def test_single_account_root(self):
        from rollupsim.state import AccountLeaf, GroupState, state_root

        state = GroupState(group=0)
        state.accounts[3] = AccountLeaf(
            nonce=2,
            l1_address=b"\xaa" * 20,
            l2_pubkey=b"\xbb" * 32,
            balances={5: 7},
        )
        assert state_root(state).hex() == (
            "fdc33a0fd9ae4a8d57fd10264efba1bc34dc5c770ba6580cbab287e9c289c382"
        )


class TestTree:
    def test_set_get(self):
        tree = smt.SparseTree(LEAF_DEFAULT)
        tree.set_leaf(5, leaf(5))
        assert tree.get_leaf(5) == leaf(5)
        assert tree.get_leaf(6) == LEAF_DEFAULT

    def test_root_changes_with_content(self):
        tree = smt.SparseTree(LEAF_DEFAULT)
        empty = tree.root()
        tree.set_leaf(0, leaf(0))
        assert tree.root() != empty

    def test_setting_back_to_default_restores_root(self):
        tree = smt.SparseTree(LEAF_DEFAULT)
        empty = tree.root()
        tree.set_leaf(9, leaf(9))
        tree.set_leaf(9, LEAF_DEFAULT)
        assert tree.root() == empty

    @settings(max_examples=25, deadline=None)
    @given(st.permutations(list(range(8))))
    def test_root_is_order_independent(self, order):
        reference = smt.SparseTree(LEAF_DEFAULT)
        for i in range(8):
            reference.set_leaf(i * 1000, leaf(i))
        shuffled = smt.SparseTree(LEAF_DEFAULT)
        for i in order:
            shuffled.set_leaf(i * 1000, leaf(i))
        assert shuffled.root() == reference.root()

    def test_distant_indices(self):
        tree = smt.SparseTree(LEAF_DEFAULT)
        tree.set_leaf(0, leaf(0))
        tree.set_leaf(2**32 - 1, leaf(1))
        assert tree.get_leaf(2**32 - 1) == leaf(1)
        assert tree.root() != smt.SparseTree(LEAF_DEFAULT).root()


class TestProofs:
    def build(self) -> smt.SparseTree:
        tree = smt.SparseTree(LEAF_DEFAULT)
        for i in (0, 1, 77, 2**20):
            tree.set_leaf(i, leaf(i))
        return tree

    def test_inclusion_proof_verifies(self):
        tree = self.build()
        for i in (0, 1, 77, 2**20):
            path = tree.prove(i)
            assert smt.verify_path(tree.root(), leaf(i), path)

    def test_default_leaf_proof_verifies(self):
        tree = self.build()
        path = tree.prove(12345)
        assert smt.verify_path(tree.root(), LEAF_DEFAULT, path)

    def test_tampered_sibling_fails(self):
        tree = self.build()
        path = tree.prove(77)
        corrupted = bytes([path.siblings[0][0] ^ 0xFF]) + path.siblings[0][1:]
        bad = smt.MerklePath(
            index=path.index,
            siblings=(corrupted, *path.siblings[1:]),
        )
        assert not smt.verify_path(tree.root(), leaf(77), bad)

    def test_wrong_leaf_fails(self):
        tree = self.build()
        assert not smt.verify_path(tree.root(), leaf(99), tree.prove(77))

    def test_wrong_index_fails(self):
        tree = self.build()
        path = tree.prove(77)
        moved = smt.MerklePath(index=78, siblings=path.siblings)
        assert not smt.verify_path(tree.root(), leaf(77), moved)
