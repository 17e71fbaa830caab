"""Compressed hierarchical kernel matrices with blocked Krylov solvers.

The pipeline: generate points, build a cluster tree, derive a block tree
from the admissibility condition, assemble the compressed operator, then
run fast products and multi-right-hand-side solvers against it.
"""

from .apply import (TransformedCoefficients, Workspace, addeval_block,
                    addeval_list, addeval_recursive, backward, forward,
                    matvec, parallel_backward, parallel_forward)
from .basis import ClusterBasis, build_cluster_basis
from .blocktree import (Block, BlockTree, RowLists, admissible,
                        block_tree_stats, build_block_tree, prepare_row_lists,
                        sparsity_constant)
from .cluster import Cluster, ClusterTree, build_cluster_tree
from .dense import GivensRotation, gemm_update, make_givens, upper_tri_solve
from .errors import (BreakdownError, ContractError, DimensionMismatchError,
                     EmptyInputError, FactorizationError,
                     SingularEvaluationError, SingularTriangularError)
from .estimator import H2KernelOperator
from .geometry import (BoundingBox, PointCloud, box_around, box_distance,
                       fibonacci_sphere)
from .h2matrix import H2Matrix, assemble_h2, densify
from .interpolation import chebyshev_grid, chebyshev_nodes_1d, tensor_lagrange
from .kernels import (KernelFunction, collocation_diagonal,
                      dense_collocation_matrix, helmholtz3d, kernel_eval,
                      kernel_matrix, laplace3d)
from .krylov import (DenseOperator, H2Operator, SolveOptions, SolveReport,
                     as_operator, block_pcg, block_pgmres, cg_solve,
                     gmres_solve)
from .precond import (BlockJacobiPreconditioner, Factorization,
                      FactorPreconditioner, Preconditioner,
                      apply_inverse_chunked, block_jacobi_from_nearfield,
                      ic_drop_factor, identity, ilu_drop_factor)

__version__ = "0.1.0"

__all__ = [
    "Block", "BlockJacobiPreconditioner", "BlockTree", "BoundingBox",
    "BreakdownError", "Cluster", "ClusterBasis", "ClusterTree",
    "ContractError", "DenseOperator", "DimensionMismatchError",
    "EmptyInputError", "Factorization", "FactorizationError",
    "FactorPreconditioner", "GivensRotation", "H2KernelOperator", "H2Matrix",
    "H2Operator", "KernelFunction", "PointCloud", "Preconditioner",
    "RowLists", "SingularEvaluationError", "SingularTriangularError",
    "SolveOptions", "SolveReport", "TransformedCoefficients", "Workspace",
    "addeval_block", "addeval_list", "addeval_recursive", "admissible",
    "apply_inverse_chunked", "as_operator", "assemble_h2", "backward",
    "block_jacobi_from_nearfield", "block_pcg", "block_pgmres",
    "block_tree_stats", "box_around", "box_distance", "build_block_tree",
    "build_cluster_basis", "build_cluster_tree", "cg_solve", "chebyshev_grid",
    "chebyshev_nodes_1d", "collocation_diagonal", "dense_collocation_matrix",
    "densify", "fibonacci_sphere", "forward", "gemm_update", "gmres_solve",
    "helmholtz3d", "ic_drop_factor", "identity", "ilu_drop_factor",
    "kernel_eval", "kernel_matrix", "laplace3d", "make_givens", "matvec",
    "parallel_backward", "parallel_forward", "prepare_row_lists",
    "sparsity_constant", "tensor_lagrange", "upper_tri_solve",
]
