"""Block trees: admissibility, son rules, coverage, work lists."""

import numpy as np
import pytest

import h2krylov as hk


@pytest.fixture(scope="module")
def setup():
    cloud = hk.fibonacci_sphere(400)
    tree = hk.build_cluster_tree(cloud, leaf_size=16)
    bt = hk.build_block_tree(tree, tree, eta=2.0)
    return cloud, tree, bt


class TestAdmissibility:
    def test_far_boxes_admissible(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.array([10.0, 0, 0]), np.array([11.0, 1, 1]))
        assert hk.admissible(a, b, eta=2.0)

    def test_touching_boxes_not_admissible(self):
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.array([1.0, 0, 0]), np.array([2.0, 1, 1]))
        assert not hk.admissible(a, b, eta=1e9)

    def test_eta_threshold(self):
        # diameter sqrt(3), distance 2: admissible iff eta >= sqrt(3)/2
        a = hk.BoundingBox(np.zeros(3), np.ones(3))
        b = hk.BoundingBox(np.array([3.0, 0, 0]), np.array([4.0, 1, 1]))
        assert hk.admissible(a, b, eta=1.0)
        assert not hk.admissible(a, b, eta=0.5)


class TestBlockTree:
    def test_leaves_tile_product_index_set(self, setup):
        _, tree, bt = setup
        n = tree.n
        hits = np.zeros((n, n), dtype=np.int32)
        for b in bt.leaves():
            rows = tree.label(b.row_cluster)
            cols = tree.label(b.col_cluster)
            hits[np.ix_(rows, cols)] += 1
        assert (hits == 1).all()

    def test_son_rule_cases(self, setup):
        _, _, bt = setup
        for b in bt.blocks:
            if b.is_leaf:
                continue
            t, s = b.row_cluster, b.col_cluster
            if t.is_leaf:
                expected = [(t, s2) for s2 in s.sons]
            elif s.is_leaf:
                expected = [(t2, s) for t2 in t.sons]
            else:
                expected = [(t2, s2) for t2 in t.sons for s2 in s.sons]
            got = [(son.row_cluster, son.col_cluster) for son in b.sons]
            assert got == expected

    def test_admissible_leaves_pass_condition(self, setup):
        _, _, bt = setup
        for b in bt.leaves():
            if b.is_admissible:
                assert hk.admissible(b.row_cluster.box, b.col_cluster.box,
                                     bt.eta)

    def test_dense_leaves_are_leaf_pairs(self, setup):
        _, _, bt = setup
        for b in bt.leaves():
            if not b.is_admissible:
                assert b.row_cluster.is_leaf and b.col_cluster.is_leaf

    def test_preorder_ids(self, setup):
        _, _, bt = setup
        for i, b in enumerate(bt.blocks):
            assert b.id == i
        for b in bt.blocks:
            for son in b.sons:
                assert son.id > b.id

    def test_dense_leaf_count_never_grows_with_eta(self):
        cloud = hk.fibonacci_sphere(512)
        tree = hk.build_cluster_tree(cloud, leaf_size=16)
        dense_counts = []
        for eta in (0.5, 1.0, 2.0, 4.0):
            bt = hk.build_block_tree(tree, tree, eta=eta)
            _, n_inadm, _ = bt.counts
            dense_counts.append(n_inadm)
        assert all(b <= a for a, b in zip(dense_counts, dense_counts[1:]))


class TestRowLists:
    def test_every_leaf_listed_once(self, setup):
        _, _, bt = setup
        rl = hk.prepare_row_lists(bt)
        listed = [b.id for blocks in rl.lists.values() for b in blocks]
        leaf_ids = [b.id for b in bt.leaves()]
        assert sorted(listed) == sorted(leaf_ids)

    def test_lists_keyed_by_row_cluster(self, setup):
        _, _, bt = setup
        rl = hk.prepare_row_lists(bt)
        for cid, blocks in rl.lists.items():
            for b in blocks:
                assert b.row_cluster.id == cid

    def test_lists_in_preorder(self, setup):
        _, _, bt = setup
        rl = hk.prepare_row_lists(bt)
        for blocks in rl.lists.values():
            ids = [b.id for b in blocks]
            assert ids == sorted(ids)

    def test_sparsity_constant_bounds_lists(self, setup):
        _, _, bt = setup
        rl = hk.prepare_row_lists(bt)
        c_sp = hk.sparsity_constant(rl)
        assert c_sp >= 1
        assert all(len(blocks) <= c_sp for blocks in rl.lists.values())

    def test_stats_keys(self, setup):
        _, _, bt = setup
        stats = hk.block_tree_stats(bt)
        for key in ("n_admissible", "n_inadmissible", "n_subdivided", "c_sp"):
            assert key in stats
