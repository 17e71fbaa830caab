"""Tensor Chebyshev interpolation on axis-aligned boxes.

Nodes are Chebyshev points of the first kind mapped affinely into each box
axis; the 3D node set is their tensor grid of size order^3. Lagrange basis
evaluation uses the direct product formula, which is stable at the small
orders (<= 8 or so) used for kernel compression.

A flattened tensor index nu enumerates (a, b, c) axis indices as
nu = (a*order + b)*order + c; the grid and the basis evaluation share this
convention, which is what makes transfer matrices consistent.
"""

from __future__ import annotations

import numpy as np


def chebyshev_nodes_1d(order):
    """Chebyshev points of the first kind on [-1, 1], descending."""
    if order < 1:
        raise ValueError("order must be >= 1")
    j = np.arange(order)
    return np.cos((2.0 * j + 1.0) * np.pi / (2.0 * order))


def chebyshev_grid(box, order):
    """Tensor grid of order^3 interpolation nodes inside a box.

    A degenerate axis (lo = hi) collapses all nodes onto that coordinate.
    """
    ref = chebyshev_nodes_1d(order)
    mid = 0.5 * (box.lo + box.hi)
    half = 0.5 * (box.hi - box.lo)
    axes = [mid[d] + half[d] * ref for d in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(order**3, 3)


def lagrange_matrix_1d(nodes, x):
    """Lagrange basis of the given nodes evaluated at points x.

    Returns L with L[i, j] = ell_j(x[i]). When all nodes coincide
    (degenerate box axis) the basis degenerates to the constant one:
    the first column is 1, the rest 0. That choice keeps parent-child
    interpolation exact on degenerate axes.
    """
    nodes = np.asarray(nodes, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    p = nodes.shape[0]
    out = np.empty((x.shape[0], p), dtype=np.float64)
    if p == 1 or np.ptp(nodes) == 0.0:
        out[:, 0] = 1.0
        out[:, 1:] = 0.0
        return out
    for j in range(p):
        others = np.delete(nodes, j)
        num = np.prod(x[:, None] - others[None, :], axis=1)
        den = np.prod(nodes[j] - others)
        out[:, j] = num / den
    return out


def tensor_lagrange(box, order, x):
    """Tensor Lagrange basis of a box's grid evaluated at 3D points x.

    Returns L with L[i, nu] = prod_d ell_{nu_d}(x[i, d]), columns in the
    same flattened order as chebyshev_grid.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = chebyshev_nodes_1d(order)
    mid = 0.5 * (box.lo + box.hi)
    half = 0.5 * (box.hi - box.lo)
    per_axis = [
        lagrange_matrix_1d(mid[d] + half[d] * ref, x[:, d]) for d in range(3)
    ]
    cube = np.einsum("ia,ib,ic->iabc", *per_axis)
    return cube.reshape(x.shape[0], order**3)
