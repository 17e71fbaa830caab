"""Cluster trees: recursive geometric bisection of an index set.

A cluster owns a contiguous span of a global permutation array; its label
(the owned index set) is ``permutation[start:end]``. Clusters are numbered in
pre-order, so ``tree.clusters[0]`` is the root and any subtree occupies a
contiguous id range.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import EmptyInputError
from .geometry import BoundingBox, box_around

DEFAULT_LEAF_SIZE = 32


class Cluster:
    """One node of a cluster tree."""

    __slots__ = ("id", "start", "end", "box", "sons", "level")

    def __init__(self, cid, start, end, box, level):
        self.id = cid
        self.start = start
        self.end = end
        self.box = box
        self.sons = ()
        self.level = level

    @property
    def size(self):
        return self.end - self.start

    @property
    def is_leaf(self):
        return not self.sons

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "node"
        return f"<Cluster {self.id} {kind} [{self.start}:{self.end}]>"


class ClusterTree:
    """Binary cluster tree over a point cloud."""

    def __init__(self, root, clusters, permutation, leaf_size, points):
        self.root = root
        self.clusters = clusters  # pre-order, indexed by cluster id
        self.permutation = permutation
        self.inverse_permutation = np.argsort(permutation)
        self.leaf_size = leaf_size
        self.points = points  # original coordinates, original order

    @property
    def n(self):
        return len(self.permutation)

    @property
    def n_clusters(self):
        return len(self.clusters)

    @property
    def depth(self):
        return max(c.level for c in self.clusters)

    def label(self, cluster):
        """Original indices owned by a cluster."""
        return self.permutation[cluster.start:cluster.end]

    def leaves(self):
        return [c for c in self.clusters if c.is_leaf]

    def cut(self, min_parts):
        """Split the tree into an upper part and disjoint subtrees for tasking.

        Returns (upper, part_roots): ``upper`` holds the internal clusters
        above the cut in pre-order; ``part_roots`` holds clusters whose
        subtrees partition the index set. The cut is taken at the first level
        holding at least ``min_parts`` clusters.
        """
        by_level = {}
        for c in self.clusters:
            by_level.setdefault(c.level, []).append(c)
        cut_level = self.depth
        for level in sorted(by_level):
            if len(by_level[level]) >= min_parts:
                cut_level = level
                break
        upper, parts = [], []
        for c in self.clusters:  # pre-order
            if c.level < cut_level and not c.is_leaf:
                upper.append(c)
            elif c.level == cut_level or (c.level < cut_level and c.is_leaf):
                parts.append(c)
        return upper, parts


def build_cluster_tree(cloud, leaf_size=DEFAULT_LEAF_SIZE):
    """Build a binary cluster tree by median splits along the longest box axis.

    Ties on the split coordinate are broken by original index, which makes the
    construction fully deterministic. Clusters whose points all coincide stay
    leaves regardless of size (a warning is emitted).
    """
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")
    points = cloud.points
    n = cloud.n
    perm = np.arange(n, dtype=np.int64)
    clusters = []

    def build(start, end, level):
        cid = len(clusters)
        clusters.append(None)  # reserve pre-order slot
        owned = perm[start:end]
        box = box_around(points[owned])
        node = Cluster(cid, start, end, box, level)
        size = end - start
        if size > leaf_size:
            extent = box.hi - box.lo
            if np.all(extent == 0.0):
                warnings.warn(
                    f"cluster {cid}: {size} coincident points, kept as oversized leaf",
                    stacklevel=2,
                )
            else:
                axis = int(np.argmax(extent))
                order = np.lexsort((owned, points[owned, axis]))
                perm[start:end] = owned[order]
                half = start + size // 2
                left = build(start, half, level + 1)
                right = build(half, end, level + 1)
                node.sons = (left, right)
        clusters[cid] = node
        return node

    root = build(0, n, 0)
    return ClusterTree(root, clusters, perm, leaf_size, points)
