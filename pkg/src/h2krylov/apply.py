"""Fast products with compressed kernel matrices.

A product y += alpha * G * x runs in three phases:

1. forward: transformed input coefficients xhat_s = W_s^* x|_s, computed
   bottom-up (leaves first, parents sum over sons through transfer matrices);
2. multiplication: per row cluster t, drain its work list — couplings update
   yhat_t += alpha * S_b @ xhat_s, nearfield blocks update the permuted output
   rows directly;
3. backward: push yhat down the tree (sons += E_son @ yhat_parent), leaves
   write V_t @ yhat_t into their output rows.

Every output target (a coefficient block or a row span) is written by exactly
one row cluster, so the multiplication phase parallelizes over disjoint
subtrees without synchronization. Son sums and work lists keep a fixed order,
which makes results bitwise identical across thread counts and repeated runs.

Vectors and multivectors are in original point order; the permutation into
cluster order happens once per product on entry and exit.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ContractError, DimensionMismatchError


def _subtree_preorder(cluster):
    """All clusters of a subtree, parents before sons."""
    out = []
    stack = [cluster]
    while stack:
        node = stack.pop()
        out.append(node)
        stack.extend(reversed(node.sons))
    return out


class TransformedCoefficients:
    """Per-cluster coefficient blocks of shape (rank, m), stored as one array."""

    def __init__(self, tree, rank, m, dtype):
        self.tree = tree
        self.rank = rank
        self.m = m
        self.data = np.zeros((tree.n_clusters, rank, m), dtype=dtype)

    def block(self, cluster_id):
        return self.data[cluster_id]


class Workspace:
    """Reusable buffers for products against one compressed matrix.

    Grown on demand when a wider multivector or a wider scalar type shows
    up. One workspace serves one product at a time; concurrent products
    against the same matrix need distinct workspaces.
    """

    def __init__(self, h2):
        self.h2 = h2
        self.m_cap = 0
        self.dtype = None
        self.xhat = None
        self.yhat = None
        self.xperm = None
        self.yperm = None

    def ensure(self, m, dtype):
        if m <= self.m_cap and dtype == self.dtype:
            return
        m_cap = max(m, self.m_cap)
        n = self.h2.shape[0]
        k = self.h2.rank
        n_clusters = self.h2.block_tree.row_tree.n_clusters
        self.xhat = np.zeros((n_clusters, k, m_cap), dtype=dtype)
        self.yhat = np.zeros((n_clusters, k, m_cap), dtype=dtype)
        self.xperm = np.zeros((n, m_cap), dtype=dtype)
        self.yperm = np.zeros((n, m_cap), dtype=dtype)
        self.m_cap = m_cap
        self.dtype = dtype

    def views(self, m):
        return (self.xhat[:, :, :m], self.yhat[:, :, :m],
                self.xperm[:, :m], self.yperm[:, :m])


def get_workspace(h2):
    ws = getattr(h2, "_workspace", None)
    if ws is None:
        ws = Workspace(h2)
        h2._workspace = ws
    return ws


def _as_columns(x):
    x = np.asarray(x)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim == 2:
        return x
    raise DimensionMismatchError(f"expected vector or matrix, got ndim={x.ndim}")


def _as_output_columns(y):
    if not isinstance(y, np.ndarray):
        raise ContractError("output must be a numpy array (updated in place)")
    return _as_columns(y)


# -- phase kernels over a set of clusters ----------------------------------

def _forward_clusters(basis, xperm, xhat, clusters_bottom_up):
    transfers = basis.transfers
    leaf_matrices = basis.leaf_matrices
    for c in clusters_bottom_up:
        acc = xhat[c.id]
        if c.is_leaf:
            np.matmul(leaf_matrices[c.id].T, xperm[c.start:c.end], out=acc)
        else:
            first = c.sons[0]
            np.matmul(transfers[first.id].T, xhat[first.id], out=acc)
            for son in c.sons[1:]:
                acc += transfers[son.id].T @ xhat[son.id]


def _multiply_clusters(h2, alpha, xhat, yhat, xperm, yperm, clusters):
    lists = h2.row_lists.lists
    couplings = h2.couplings
    nearfield = h2.nearfield
    for t in clusters:
        entries = lists.get(t.id)
        if not entries:
            continue
        acc = yhat[t.id]
        for block in entries:
            s = block.col_cluster
            if block.is_admissible:
                update = couplings[block.id] @ xhat[s.id]
                if alpha != 1:
                    update *= alpha
                acc += update
            else:
                update = nearfield[block.id] @ xperm[s.start:s.end]
                if alpha != 1:
                    update *= alpha
                yperm[t.start:t.end] += update


def _backward_clusters(basis, yhat, yperm, clusters_top_down, push_leaves=True):
    transfers = basis.transfers
    leaf_matrices = basis.leaf_matrices
    for c in clusters_top_down:
        block = yhat[c.id]
        if c.is_leaf:
            if push_leaves:
                yperm[c.start:c.end] += leaf_matrices[c.id] @ block
        else:
            for son in c.sons:
                yhat[son.id] += transfers[son.id] @ block


# -- public transforms ------------------------------------------------------

def forward(basis, x):
    """Transform a multivector into per-cluster coefficients, bottom-up.

    The conjugate transpose of the basis acts on the input; the
    interpolation basis is real, so this is a plain transpose.
    """
    x2 = _as_columns(x)
    tree = basis.tree
    if x2.shape[0] != tree.n:
        raise DimensionMismatchError(
            f"input has {x2.shape[0]} rows, tree indexes {tree.n}"
        )
    dtype = np.result_type(x2.dtype, np.float64)
    coeffs = TransformedCoefficients(tree, basis.rank, x2.shape[1], dtype)
    xperm = np.ascontiguousarray(x2[tree.permutation], dtype=dtype)
    _forward_clusters(basis, xperm, coeffs.data, reversed(tree.clusters))
    return coeffs


def backward(basis, yhat, y):
    """Add the basis expansion of coefficient blocks into y, top-down.

    Mutates both y (additively) and yhat (parent blocks are pushed into
    their sons during the descent).
    """
    y2 = _as_output_columns(y)
    tree = basis.tree
    if y2.shape[0] != tree.n:
        raise DimensionMismatchError(
            f"output has {y2.shape[0]} rows, tree indexes {tree.n}"
        )
    if y2.shape[1] != yhat.m:
        raise DimensionMismatchError(
            f"output has {y2.shape[1]} columns, coefficients have {yhat.m}"
        )
    if not np.can_cast(yhat.data.dtype, y2.dtype):
        raise ContractError(
            f"coefficients of type {yhat.data.dtype} cannot accumulate "
            f"into y of type {y2.dtype}"
        )
    yperm = np.zeros((tree.n, yhat.m), dtype=yhat.data.dtype)
    _backward_clusters(basis, yhat.data, yperm, tree.clusters)
    y2[tree.permutation] += yperm
    return y


def parallel_forward(basis, x, threads=1):
    """forward with the bottom half of the tree split into subtree tasks.

    Results are bitwise identical to the sequential transform: son sums
    happen in fixed order after all subtree tasks have joined.
    """
    x2 = _as_columns(x)
    tree = basis.tree
    if x2.shape[0] != tree.n:
        raise DimensionMismatchError(
            f"input has {x2.shape[0]} rows, tree indexes {tree.n}"
        )
    dtype = np.result_type(x2.dtype, np.float64)
    coeffs = TransformedCoefficients(tree, basis.rank, x2.shape[1], dtype)
    xperm = np.ascontiguousarray(x2[tree.permutation], dtype=dtype)
    upper, parts = _plan(tree, threads)
    if parts is None:
        _forward_clusters(basis, xperm, coeffs.data, reversed(tree.clusters))
        return coeffs
    with ThreadPoolExecutor(max_workers=threads) as pool:
        jobs = [
            pool.submit(_forward_clusters, basis, xperm, coeffs.data,
                        reversed(_subtree_preorder(root)))
            for root in parts
        ]
        for job in jobs:
            job.result()
    _forward_clusters(basis, xperm, coeffs.data, reversed(upper))
    return coeffs


def parallel_backward(basis, yhat, y, threads=1):
    """backward with the descent below a cut split into subtree tasks."""
    y2 = _as_output_columns(y)
    tree = basis.tree
    if y2.shape[0] != tree.n:
        raise DimensionMismatchError(
            f"output has {y2.shape[0]} rows, tree indexes {tree.n}"
        )
    if not np.can_cast(yhat.data.dtype, y2.dtype):
        raise ContractError(
            f"coefficients of type {yhat.data.dtype} cannot accumulate "
            f"into y of type {y2.dtype}"
        )
    yperm = np.zeros((tree.n, yhat.m), dtype=yhat.data.dtype)
    upper, parts = _plan(tree, threads)
    if parts is None:
        _backward_clusters(basis, yhat.data, yperm, tree.clusters)
    else:
        _backward_clusters(basis, yhat.data, yperm, upper)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            jobs = [
                pool.submit(_backward_clusters, basis, yhat.data, yperm,
                            _subtree_preorder(root))
                for root in parts
            ]
            for job in jobs:
                job.result()
    y2[tree.permutation] += yperm
    return y


def _plan(tree, threads):
    """Choose the task decomposition: upper clusters plus subtree parts."""
    if threads <= 1:
        return None, None
    upper, part_roots = tree.cut(4 * threads)
    if len(part_roots) <= 1:
        return None, None
    return upper, part_roots


# -- full products ----------------------------------------------------------

def _addeval(alpha, h2, x2, y2, threads):
    n = h2.shape[0]
    if x2.shape[0] != n or y2.shape[0] != n:
        raise DimensionMismatchError(
            f"operator is {h2.shape}, got x rows {x2.shape[0]}, "
            f"y rows {y2.shape[0]}"
        )
    if x2.shape[1] != y2.shape[1]:
        raise DimensionMismatchError(
            f"x has {x2.shape[1]} columns, y has {y2.shape[1]}"
        )
    m = x2.shape[1]
    if m == 0 or alpha == 0:
        return y2
    dtype = np.result_type(h2.dtype, x2.dtype, np.result_type(type(alpha)))
    if not np.can_cast(dtype, y2.dtype):
        raise ContractError(
            f"product of type {dtype} cannot accumulate into y of type {y2.dtype}"
        )
    if h2.row_lists is None:
        raise ContractError("compressed matrix lacks row lists")

    tree = h2.block_tree.row_tree
    ws = get_workspace(h2)
    ws.ensure(m, dtype)
    xhat, yhat, xperm, yperm = ws.views(m)
    xhat[...] = 0.0
    yhat[...] = 0.0
    yperm[...] = 0.0
    xperm[...] = x2[tree.permutation]

    basis = h2.row_basis
    upper, parts = _plan(tree, threads)
    if parts is None:
        order = tree.clusters
        _forward_clusters(h2.col_basis, xperm, xhat, reversed(order))
        _multiply_clusters(h2, alpha, xhat, yhat, xperm, yperm, order)
        _backward_clusters(basis, yhat, yperm, order)
    else:
        part_orders = [_subtree_preorder(root) for root in parts]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            def run(fn, per_part_args, upper_args):
                jobs = [pool.submit(fn, *args) for args in per_part_args]
                for job in jobs:
                    job.result()
                fn(*upper_args)

            run(_forward_clusters,
                [(h2.col_basis, xperm, xhat, reversed(po)) for po in part_orders],
                (h2.col_basis, xperm, xhat, reversed(upper)))
            run(_multiply_clusters,
                [(h2, alpha, xhat, yhat, xperm, yperm, po) for po in part_orders],
                (h2, alpha, xhat, yhat, xperm, yperm, upper))
            # backward descends: upper first, then the subtree tasks
            _backward_clusters(basis, yhat, yperm, upper)
            jobs = [pool.submit(_backward_clusters, basis, yhat, yperm, po)
                    for po in part_orders]
            for job in jobs:
                job.result()
    y2[tree.permutation] += yperm
    return y2


def addeval_recursive(alpha, h2, x, y):
    """Reference product y += alpha * G * x, recursive over the block tree.

    Single-threaded; the multiplication phase walks the block tree directly
    instead of using row lists. Used as the oracle the list-based and
    parallel variants are checked against.
    """
    x2 = _as_columns(x)
    y2 = _as_output_columns(y)
    n = h2.shape[0]
    if x2.shape[0] != n or y2.shape[0] != n or x2.shape[1] != y2.shape[1]:
        raise DimensionMismatchError("shapes do not conform")
    if alpha == 0 or x2.shape[1] == 0:
        return y
    tree = h2.block_tree.row_tree
    dtype = np.result_type(h2.dtype, x2.dtype, np.result_type(type(alpha)))
    if not np.can_cast(dtype, y2.dtype):
        raise ContractError(
            f"product of type {dtype} cannot accumulate into y of type {y2.dtype}"
        )
    xperm = np.ascontiguousarray(x2[tree.permutation], dtype=dtype)
    yperm = np.zeros((n, x2.shape[1]), dtype=dtype)
    xhat = np.zeros((tree.n_clusters, h2.rank, x2.shape[1]), dtype=dtype)
    yhat = np.zeros_like(xhat)
    _forward_clusters(h2.col_basis, xperm, xhat, reversed(tree.clusters))

    def descend(block):
        t, s = block.row_cluster, block.col_cluster
        if block.is_admissible:
            update = h2.couplings[block.id] @ xhat[s.id]
            if alpha != 1:
                update *= alpha
            yhat[t.id] += update
        elif block.is_leaf:
            update = h2.nearfield[block.id] @ xperm[s.start:s.end]
            if alpha != 1:
                update *= alpha
            yperm[t.start:t.end] += update
        else:
            for son in block.sons:
                descend(son)

    descend(h2.block_tree.root)
    _backward_clusters(h2.row_basis, yhat, yperm, tree.clusters)
    y2[tree.permutation] += yperm
    return y


def addeval_list(alpha, h2, x, y, threads=1):
    """Product y += alpha * G * x driven by per-row-cluster work lists.

    threads > 1 splits the tree into disjoint subtree tasks; output is
    bitwise identical for every thread count.
    """
    _addeval(alpha, h2, _as_columns(x), _as_output_columns(y), threads)
    return y


def addeval_block(alpha, h2, x, y, threads=1):
    """Blocked product Y += alpha * G * X over all columns at once.

    One forward/backward pass of width m replaces m single-column passes;
    leaf updates become GEMM-shaped. Column i of the result equals the
    single-column product with column i of X.
    """
    _addeval(alpha, h2, _as_columns(x), _as_output_columns(y), threads)
    return y


def matvec(h2, x, threads=1):
    """Convenience: y = G @ x into a fresh array."""
    x2 = _as_columns(x)
    dtype = np.result_type(h2.dtype, x2.dtype)
    y = np.zeros(x2.shape, dtype=dtype, order="F")
    _addeval(1.0, h2, x2, y, threads)
    return y if np.asarray(x).ndim > 1 else y[:, 0]
