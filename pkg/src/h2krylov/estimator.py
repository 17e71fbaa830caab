"""Estimator-style facade over the compressed kernel operator.

H2KernelOperator follows the familiar fit/apply pattern: construct with
hyperparameters, fit on an (n, 3) point set, then use matvec / matmat /
solve against the fitted operator. Parameters are introspectable through
get_params / set_params, so the class composes with standard model-selection
tooling even though it is an operator, not a predictor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .apply import addeval_block, matvec
from .blocktree import build_block_tree
from .cluster import build_cluster_tree
from .errors import ContractError
from .geometry import PointCloud
from .h2matrix import assemble_h2, densify
from .kernels import helmholtz3d, laplace3d
from .krylov import H2Operator, SolveOptions, block_pcg, block_pgmres
from .precond import (FactorPreconditioner, Preconditioner,
                      block_jacobi_from_nearfield, ic_drop_factor,
                      ilu_drop_factor)
from .validation import check_choice, check_multivector, check_points, check_positive

KERNELS = {"laplace", "helmholtz"}
PRECONDS = {"none", "jacobi", "ic", "ilu"}
SOLVERS = {"cg", "pcg", "gmres", "pgmres"}


class H2KernelOperator(BaseEstimator):
    """Compressed kernel collocation operator with solver shortcuts.

    Parameters
    ----------
    kernel : {"laplace", "helmholtz"}
        Kernel function; helmholtz makes the operator complex valued.
    kappa : float
        Helmholtz wave number (ignored for laplace).
    order : int
        Interpolation order per axis; rank is order**3. Higher order means
        a more accurate, more expensive operator.
    eta : float
        Admissibility parameter; larger eta compresses more aggressively.
    leaf_size : int
        Cluster tree leaf size.
    threads : int
        Thread count for products.
    """

    def __init__(self, kernel="laplace", kappa=1.0, order=3, eta=2.0,
                 leaf_size=32, threads=1):
        self.kernel = kernel
        self.kappa = kappa
        self.order = order
        self.eta = eta
        self.leaf_size = leaf_size
        self.threads = threads

    def fit(self, X, y=None):
        """Assemble the compressed operator over the given points."""
        check_choice(self.kernel, KERNELS, "kernel")
        check_positive(self.order, "order")
        check_positive(self.eta, "eta")
        check_positive(self.leaf_size, "leaf_size")
        points = check_points(X)
        kern = (laplace3d() if self.kernel == "laplace"
                else helmholtz3d(self.kappa))
        cloud = PointCloud(points)
        tree = build_cluster_tree(cloud, leaf_size=self.leaf_size)
        block_tree = build_block_tree(tree, tree, eta=self.eta)
        self.h2_ = assemble_h2(kern, cloud, tree, block_tree, self.order)
        self.tree_ = tree
        self.block_tree_ = block_tree
        self.n_points_ = points.shape[0]
        self.n_features_in_ = 3
        return self

    def _check_fitted(self):
        if not hasattr(self, "h2_"):
            raise ContractError("operator is not fitted; call fit(points) first")

    def matvec(self, v):
        """Product G @ v for a vector or multivector v."""
        self._check_fitted()
        v2, was_1d = check_multivector(v, self.n_points_)
        out = matvec(self.h2_, v2, threads=self.threads)
        return out[:, 0] if was_1d else out

    def matmat(self, V):
        """Blocked product G @ V for an (n, m) block of columns."""
        self._check_fitted()
        v2, _ = check_multivector(V, self.n_points_, name="V")
        y = np.zeros(v2.shape, dtype=np.result_type(self.h2_.dtype, v2.dtype),
                     order="F")
        addeval_block(1.0, self.h2_, v2, y, threads=self.threads)
        return y

    def build_preconditioner(self, precond="jacobi", tau=1e-2):
        """Create a preconditioner for this operator.

        "jacobi" inverts the diagonal nearfield blocks; "ic" / "ilu" factor
        the densified operator with drop tolerance tau; "none" is identity.
        """
        self._check_fitted()
        check_choice(precond, PRECONDS, "precond")
        if precond == "none":
            return Preconditioner(self.n_points_)
        if precond == "jacobi":
            return block_jacobi_from_nearfield(self.h2_)
        dense = densify(self.h2_)
        factor = ic_drop_factor(dense, tau) if precond == "ic" \
            else ilu_drop_factor(dense, tau)
        return FactorPreconditioner(factor)

    def solve(self, B, solver="pcg", precond="none", tau=1e-2, eps_slv=1e-8,
              restart=30, opts=None):
        """Solve G X = B for all columns of B; returns (X, SolveReport)."""
        self._check_fitted()
        check_choice(solver, SOLVERS, "solver")
        if solver in ("cg", "pcg") and not self.h2_.kernel.is_spd:
            raise ContractError(
                f"solver {solver!r} needs a symmetric positive definite "
                "operator; use gmres/pgmres for this kernel"
            )
        if solver in ("cg", "gmres") and precond != "none":
            raise ValueError(
                f"solver {solver!r} is unpreconditioned; use p{solver} with "
                f"precond={precond!r}"
            )
        b2, was_1d = check_multivector(B, self.n_points_, name="B")
        if opts is None:
            opts = SolveOptions(eps_slv=eps_slv, restart_len=restart)
        m_inv = (Preconditioner(self.n_points_) if solver in ("cg", "gmres")
                 else self.build_preconditioner(precond, tau))
        op = H2Operator(self.h2_, threads=self.threads)
        if solver in ("cg", "pcg"):
            x, report = block_pcg(op, m_inv, b2, opts=opts)
        else:
            x, report = block_pgmres(op, m_inv, b2, opts=opts)
        return (x[:, 0] if was_1d else x), report

    def densify(self):
        """Dense matrix form of the fitted operator (verification only)."""
        self._check_fitted()
        return densify(self.h2_)

    def stats(self):
        self._check_fitted()
        return self.h2_.stats()
