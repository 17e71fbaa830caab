"""Assembly of compressed kernel matrices and the dense reconstruction."""

import numpy as np
import pytest

import h2krylov as hk
from h2krylov.errors import ContractError


class TestAssembly:
    def test_compression_error_small(self, instance, oracle):
        inst = instance(256, order=4, leaf_size=16)
        g = oracle(inst)
        err = np.linalg.norm(hk.densify(inst["h2"]) - g) / np.linalg.norm(g)
        assert err <= 1e-4

    def test_error_decreases_with_order(self, instance, oracle):
        errs = []
        for order in (2, 3, 4):
            inst = instance(256, order=order, leaf_size=16)
            g = oracle(inst)
            errs.append(
                np.linalg.norm(hk.densify(inst["h2"]) - g) / np.linalg.norm(g))
        assert errs[2] < errs[1] < errs[0]

    def test_tiny_eta_reproduces_dense_bitwise(self, instance, oracle):
        # with no admissible blocks the storage is all nearfield
        inst = instance(128, order=2, eta=1e-9)
        adm, _, _ = inst["block_tree"].counts
        assert adm == 0
        assert np.array_equal(hk.densify(inst["h2"]), oracle(inst))

    def test_dominant_diagonal_applied(self, instance, oracle):
        inst = instance(128, order=2, eta=1e-9)
        g = hk.densify(inst["h2"])
        off = np.abs(g).sum(axis=1) - np.abs(np.diag(g))
        np.testing.assert_allclose(np.diag(g), off + 1.0, rtol=1e-13)

    def test_coupling_values_are_kernel_at_nodes(self, instance):
        inst = instance(512, order=3, leaf_size=16)
        h2 = inst["h2"]
        kern = inst["kernel"]
        admissible = [b for b in inst["block_tree"].leaves()
                      if b.is_admissible]
        assert admissible
        b = admissible[len(admissible) // 2]
        row_nodes = hk.chebyshev_grid(b.row_cluster.box, 3)
        col_nodes = hk.chebyshev_grid(b.col_cluster.box, 3)
        expected = hk.kernel_matrix(kern, row_nodes, col_nodes)
        assert np.array_equal(h2.couplings[b.id], expected)

    def test_nearfield_values_match_oracle(self, instance, oracle):
        inst = instance(512, order=3, leaf_size=16)
        h2 = inst["h2"]
        tree = inst["tree"]
        g = oracle(inst)
        dense_leaves = [b for b in inst["block_tree"].leaves()
                        if not b.is_admissible]
        b = dense_leaves[0]
        rows = tree.label(b.row_cluster)
        cols = tree.label(b.col_cluster)
        assert np.array_equal(h2.nearfield[b.id], g[np.ix_(rows, cols)])

    def test_laplace_symmetry(self, instance):
        inst = instance(256, order=3, leaf_size=16)
        g = hk.densify(inst["h2"])
        assert np.abs(g - g.T).max() <= 1e-12 * np.abs(g).max()

    def test_helmholtz_dtype(self, instance):
        inst = instance(128, kernel="helmholtz", order=2)
        assert inst["h2"].dtype == np.complex128
        assert hk.densify(inst["h2"]).dtype == np.complex128

    def test_stats(self, instance):
        inst = instance(256, order=3, leaf_size=16)
        stats = inst["h2"].stats()
        assert stats["n"] == 256
        assert stats["k"] == 27
        assert stats["c_sp"] >= 1
        assert stats["mem_bytes"] == inst["h2"].memory_bytes()
        assert stats["mem_dense_bytes"] == 256 * 256 * 8

    def test_storage_beats_dense_at_scale(self, instance):
        small = instance(512, order=3, leaf_size=16)["h2"]
        big = instance(2048, order=3, leaf_size=16)["h2"]
        ratio_small = small.memory_bytes() / small.dense_memory_bytes()
        ratio_big = big.memory_bytes() / big.dense_memory_bytes()
        assert ratio_big < ratio_small


class TestGuards:
    def test_mismatched_tree_rejected(self):
        cloud = hk.fibonacci_sphere(64)
        tree_a = hk.build_cluster_tree(cloud, leaf_size=16)
        tree_b = hk.build_cluster_tree(cloud, leaf_size=8)
        bt_b = hk.build_block_tree(tree_b, tree_b, eta=2.0)
        with pytest.raises(ContractError):
            hk.assemble_h2(hk.laplace3d(), cloud, tree_a, bt_b, order=2)

    def test_wrong_diagonal_length_rejected(self):
        cloud = hk.fibonacci_sphere(64)
        tree = hk.build_cluster_tree(cloud, leaf_size=16)
        bt = hk.build_block_tree(tree, tree, eta=2.0)
        with pytest.raises(ContractError):
            hk.assemble_h2(hk.laplace3d(), cloud, tree, bt, order=2,
                           diag=np.ones(10))
