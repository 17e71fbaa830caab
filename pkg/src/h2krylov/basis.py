"""Nested cluster bases built from tensor Chebyshev interpolation.

Each cluster t carries an interpolation node set on its bounding box. Leaves
store the Lagrange basis evaluated at their owned points (V_t); non-root
clusters store a transfer matrix E_t whose entries are the parent's Lagrange
basis evaluated at the child's nodes. Restricting a parent basis to a child's
rows then equals V_child @ E_child up to polynomial-reproduction rounding,
which is the nestedness property the fast products rely on.
"""

from __future__ import annotations

import numpy as np

from .interpolation import chebyshev_grid, tensor_lagrange


class ClusterBasis:
    """Per-cluster leaf matrices, transfer matrices and node sets.

    Leaf matrix rows follow the tree's permuted point order, so fast products
    can slice contiguous spans of a permuted work vector.
    """

    def __init__(self, tree, order, leaf_matrices, transfers, nodes):
        self.tree = tree
        self.order = int(order)
        self.rank = int(order) ** 3
        self.leaf_matrices = leaf_matrices  # cluster id -> (size, k)
        self.transfers = transfers  # non-root cluster id -> (k, k)
        self.nodes = nodes  # cluster id -> (k, 3)

    def memory_bytes(self):
        total = 0
        for v in self.leaf_matrices.values():
            total += v.nbytes
        for e in self.transfers.values():
            total += e.nbytes
        return total

    def expand(self, cluster):
        """Dense (cluster.size, rank) basis matrix, descending transfers.

        Verification helper: quadratic work, only for small problems and
        tests. Rows follow the permuted order of the cluster's index span.
        """
        if cluster.is_leaf:
            return self.leaf_matrices[cluster.id]
        parts = [self.expand(son) @ self.transfers[son.id] for son in cluster.sons]
        return np.vstack(parts)


def build_cluster_basis(tree, order):
    """Build the nested interpolation basis for every cluster of a tree."""
    if order < 1:
        raise ValueError("order must be >= 1")
    points = tree.points[tree.permutation]
    nodes = {c.id: chebyshev_grid(c.box, order) for c in tree.clusters}
    leaf_matrices = {}
    transfers = {}
    for cluster in tree.clusters:
        if cluster.is_leaf:
            owned = points[cluster.start:cluster.end]
            leaf_matrices[cluster.id] = tensor_lagrange(cluster.box, order, owned)
        else:
            for son in cluster.sons:
                transfers[son.id] = tensor_lagrange(cluster.box, order, nodes[son.id])
    return ClusterBasis(tree, order, leaf_matrices, transfers, nodes)
