"""Compressed kernel matrices: nested bases, couplings, nearfield blocks.

An H2Matrix stores, per admissible leaf block b = (t, s), a small coupling
matrix S_b sampled from the kernel at interpolation node pairs, so that the
block is represented as V_t @ S_b @ W_s^*. Inadmissible leaves keep their
dense kernel entries, with the dominant diagonal rule applied where the
global row and column index coincide.
"""

from __future__ import annotations

import numpy as np

from .basis import build_cluster_basis
from .blocktree import prepare_row_lists, sparsity_constant
from .errors import ContractError
from .geometry import box_distance
from .kernels import collocation_diagonal, kernel_matrix


class H2Matrix:
    """Immutable compressed representation of a kernel collocation matrix."""

    def __init__(self, row_basis, col_basis, couplings, nearfield,
                 block_tree, row_lists, kernel, diag):
        self.row_basis = row_basis
        self.col_basis = col_basis
        self.couplings = couplings  # admissible leaf block id -> (k, k)
        self.nearfield = nearfield  # inadmissible leaf block id -> dense
        self.block_tree = block_tree
        self.row_lists = row_lists
        self.kernel = kernel
        self.diag = diag  # dominant diagonal values, original index order
        self.dtype = kernel.dtype

    @property
    def shape(self):
        return (self.block_tree.row_tree.n, self.block_tree.col_tree.n)

    @property
    def rank(self):
        return self.row_basis.rank

    def memory_bytes(self):
        total = self.row_basis.memory_bytes()
        if self.col_basis is not self.row_basis:
            total += self.col_basis.memory_bytes()
        for s in self.couplings.values():
            total += s.nbytes
        for g in self.nearfield.values():
            total += g.nbytes
        return total

    def dense_memory_bytes(self):
        n, m = self.shape
        return n * m * np.dtype(self.dtype).itemsize

    def stats(self):
        bt = self.block_tree
        n_adm, n_inadm, _ = bt.counts
        return {
            "n": bt.row_tree.n,
            "order": self.row_basis.order,
            "k": self.rank,
            "eta": bt.eta,
            "n_adm": n_adm,
            "n_inadm": n_inadm,
            "c_sp": sparsity_constant(self.row_lists),
            "mem_bytes": self.memory_bytes(),
            "mem_dense_bytes": self.dense_memory_bytes(),
        }


def assemble_h2(kernel, cloud, tree, block_tree, order, diag=None):
    """Assemble the compressed kernel matrix over a square block tree.

    Row and column trees must be the same tree over the same cloud; one
    basis then serves both sides (the column side enters conjugated, and
    the interpolation basis is real, so nothing changes).
    """
    if block_tree.row_tree is not tree or block_tree.col_tree is not tree:
        raise ContractError("block tree must be built over the given tree twice")
    if tree.n != cloud.n:
        raise ContractError("cluster tree and cloud sizes differ")
    points = cloud.points
    basis = build_cluster_basis(tree, order)
    if diag is None:
        diag = collocation_diagonal(kernel, points)
    else:
        diag = np.asarray(diag)
        if diag.shape != (cloud.n,):
            raise ContractError(
                f"diagonal needs one entry per point, got shape {diag.shape}")

    couplings = {}
    nearfield = {}
    for block in block_tree.blocks:
        t, s = block.row_cluster, block.col_cluster
        if block.is_admissible:
            if box_distance(t.box, s.box) <= 0.0:
                raise ContractError(
                    f"admissible block {block.id} has touching boxes"
                )
            couplings[block.id] = kernel_matrix(
                kernel, basis.nodes[t.id], basis.nodes[s.id]
            )
        elif block.is_leaf:
            rows = tree.label(t)
            cols = tree.label(s)
            g = kernel_matrix(kernel, points[rows], points[cols],
                              allow_zero_distance=True)
            _apply_diagonal(g, rows, cols, diag)
            nearfield[block.id] = g

    row_lists = prepare_row_lists(block_tree)
    return H2Matrix(basis, basis, couplings, nearfield, block_tree,
                    row_lists, kernel, diag)


def _apply_diagonal(block, rows, cols, diag):
    """Overwrite entries with equal global row and column index."""
    col_pos = {int(j): jj for jj, j in enumerate(cols)}
    for ii, i in enumerate(rows):
        jj = col_pos.get(int(i))
        if jj is not None:
            block[ii, jj] = diag[i]


def densify(h2):
    """Materialize the compressed matrix densely, original index order.

    Verification oracle, quadratic memory: desk-scale sizes only.
    """
    tree = h2.block_tree.row_tree
    col_tree = h2.block_tree.col_tree
    n, m = h2.shape
    out = np.zeros((n, m), dtype=h2.dtype)
    for block in h2.block_tree.leaves():
        rows = tree.label(block.row_cluster)
        cols = col_tree.label(block.col_cluster)
        if block.is_admissible:
            vt = h2.row_basis.expand(block.row_cluster)
            ws = h2.col_basis.expand(block.col_cluster)
            piece = vt @ h2.couplings[block.id] @ ws.conj().T
        else:
            piece = h2.nearfield[block.id]
        out[np.ix_(rows, cols)] = piece
    return out
