"""Block trees: admissibility-driven partition of a product index set.

The leaves of a block tree partition I x J into far-field (admissible) blocks
that will be stored in compressed form and near-field (inadmissible) blocks
stored densely. Row lists regroup the leaf blocks per row cluster so that the
multiplication phase can run one row cluster per task without write conflicts.
"""

from __future__ import annotations

import numpy as np

from .geometry import box_distance

DEFAULT_ETA = 2.0

ADMISSIBLE = "admissible-leaf"
INADMISSIBLE = "inadmissible-leaf"
SUBDIVIDED = "subdivided"


def admissible(box_t, box_s, eta):
    """Standard admissibility: max(diam_t, diam_s) <= eta * dist(box_t, box_s).

    Touching or overlapping boxes (distance 0) are never admissible.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    dist = box_distance(box_t, box_s)
    if dist <= 0.0:
        return False
    return max(box_t.diameter, box_s.diameter) <= eta * dist


class Block:
    """One node of a block tree: a pair of clusters."""

    __slots__ = ("id", "row_cluster", "col_cluster", "kind", "sons")

    def __init__(self, bid, row_cluster, col_cluster, kind, sons=()):
        self.id = bid
        self.row_cluster = row_cluster
        self.col_cluster = col_cluster
        self.kind = kind
        self.sons = sons

    @property
    def is_leaf(self):
        return self.kind != SUBDIVIDED

    @property
    def is_admissible(self):
        return self.kind == ADMISSIBLE

    def __repr__(self):
        return f"<Block {self.id} ({self.row_cluster.id},{self.col_cluster.id}) {self.kind}>"


class BlockTree:
    """Block tree over a pair of cluster trees."""

    def __init__(self, root, blocks, row_tree, col_tree, eta):
        self.root = root
        self.blocks = blocks  # pre-order, indexed by block id
        self.row_tree = row_tree
        self.col_tree = col_tree
        self.eta = eta

    @property
    def counts(self):
        n_adm = sum(1 for b in self.blocks if b.kind == ADMISSIBLE)
        n_inadm = sum(1 for b in self.blocks if b.kind == INADMISSIBLE)
        n_sub = len(self.blocks) - n_adm - n_inadm
        return n_adm, n_inadm, n_sub

    def leaves(self):
        return [b for b in self.blocks if b.is_leaf]


def build_block_tree(row_tree, col_tree, eta=DEFAULT_ETA):
    """Build the block tree for two cluster trees.

    A pair becomes an admissible leaf as soon as the admissibility condition
    holds; an inadmissible pair of two leaf clusters becomes a dense leaf;
    anything else is subdivided, descending only into the cluster(s) that
    still have sons.
    """
    blocks = []

    def build(t, s):
        bid = len(blocks)
        blocks.append(None)  # reserve pre-order slot
        if admissible(t.box, s.box, eta):
            node = Block(bid, t, s, ADMISSIBLE)
        elif t.is_leaf and s.is_leaf:
            node = Block(bid, t, s, INADMISSIBLE)
        else:
            if t.is_leaf:
                pairs = [(t, s2) for s2 in s.sons]
            elif s.is_leaf:
                pairs = [(t2, s) for t2 in t.sons]
            else:
                pairs = [(t2, s2) for t2 in t.sons for s2 in s.sons]
            node = Block(bid, t, s, SUBDIVIDED, tuple(build(*p) for p in pairs))
        blocks[bid] = node
        return node

    root = build(row_tree.root, col_tree.root)
    return BlockTree(root, blocks, row_tree, col_tree, eta)


class RowLists:
    """Per-row-cluster work lists of leaf blocks (the multiplication schedule).

    ``lists[t.id]`` holds the leaf blocks whose row cluster is ``t``, in block
    tree pre-order. Keys can be internal clusters: a block may turn admissible
    while its row cluster still has sons, so the multiplication phase drains
    the list of every cluster it visits on the way down.
    """

    def __init__(self, lists, block_tree):
        self.lists = lists
        self.built_for = block_tree

    def entries(self, cluster_id):
        return self.lists.get(cluster_id, ())

    def total_entries(self):
        return sum(len(v) for v in self.lists.values())


def prepare_row_lists(block_tree):
    """Sort all leaf blocks into per-row-cluster lists (one pre-order pass)."""
    lists = {}
    for block in block_tree.blocks:  # pre-order
        if block.is_leaf:
            lists.setdefault(block.row_cluster.id, []).append(block)
    return RowLists(lists, block_tree)


def sparsity_constant(row_lists):
    """Largest number of leaf blocks sharing one row cluster (C_sp)."""
    if not row_lists.lists:
        return 0
    return max(len(v) for v in row_lists.lists.values())


def block_tree_stats(block_tree, row_lists=None):
    """Summary row for a block tree: counts, depth, C_sp, compression estimate."""
    n_adm, n_inadm, n_sub = block_tree.counts
    if row_lists is None:
        row_lists = prepare_row_lists(block_tree)
    leaf_entries = 0
    n = block_tree.row_tree.n * block_tree.col_tree.n
    for b in block_tree.leaves():
        if b.is_admissible:
            leaf_entries += b.row_cluster.size + b.col_cluster.size
        else:
            leaf_entries += b.row_cluster.size * b.col_cluster.size
    depth = 0
    stack = [(block_tree.root, 0)]
    while stack:
        node, lvl = stack.pop()
        depth = max(depth, lvl)
        stack.extend((s, lvl + 1) for s in node.sons)
    return {
        "n_admissible": n_adm,
        "n_inadmissible": n_inadm,
        "n_subdivided": n_sub,
        "depth": depth,
        "c_sp": sparsity_constant(row_lists),
        "compression_estimate": leaf_entries / n,
    }
