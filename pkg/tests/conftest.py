"""Shared fixtures: cached geometry, trees, and assembled operators.

Assembly is the expensive step, so instances are cached per parameter set
and shared across tests. Tests must not mutate fixture objects in place.
"""

from __future__ import annotations

import numpy as np
import pytest

import h2krylov as hk

_CACHE = {}


def build_instance(n, kernel="laplace", kappa=1.0, order=3, leaf_size=32,
                   eta=2.0):
    """An assembled operator plus everything it was built from."""
    key = (n, kernel, kappa, order, leaf_size, eta)
    inst = _CACHE.get(key)
    if inst is None:
        kern = hk.laplace3d() if kernel == "laplace" else hk.helmholtz3d(kappa)
        cloud = hk.fibonacci_sphere(n)
        tree = hk.build_cluster_tree(cloud, leaf_size=leaf_size)
        block_tree = hk.build_block_tree(tree, tree, eta=eta)
        diag = hk.collocation_diagonal(kern, cloud.points)
        h2 = hk.assemble_h2(kern, cloud, tree, block_tree, order=order,
                            diag=diag)
        inst = {
            "kernel": kern,
            "cloud": cloud,
            "tree": tree,
            "block_tree": block_tree,
            "diag": diag,
            "h2": h2,
        }
        _CACHE[key] = inst
    return inst


def dense_oracle(inst):
    """Exact dense collocation matrix for an instance, cached."""
    if "dense" not in inst:
        inst["dense"] = hk.dense_collocation_matrix(
            inst["kernel"], inst["cloud"].points, diag=inst["diag"])
    return inst["dense"]


@pytest.fixture(scope="session")
def instance():
    return build_instance


@pytest.fixture(scope="session")
def oracle():
    return dense_oracle


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
