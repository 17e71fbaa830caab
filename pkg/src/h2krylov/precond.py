"""Preconditioners: drop-tolerance incomplete factorizations and block Jacobi.

The incomplete Cholesky / LU factorizations work on dense matrices with a
relative drop rule: an off-diagonal factor entry is kept only if the entry it
eliminates satisfies |w_ij| >= tau * sqrt(|a_ii * a_jj|). tau = 0 gives the
exact factorization, larger tau gives a cheaper, weaker preconditioner, so
tau is the quality knob traded against iteration counts.

Block Jacobi reuses the diagonal nearfield blocks of a compressed kernel
matrix, so it needs no dense assembly at all.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import lu_factor, lu_solve, solve_triangular

from .errors import FactorizationError

PIVOT_BOOST_REL = 1e-8
MAX_BOOSTS = 3


class Preconditioner:
    """Base class: the identity preconditioner."""

    kind = "identity"

    def __init__(self, n, quality=0.0):
        self.n = n
        self.quality = quality

    def apply_inverse(self, r):
        """Return M^{-1} r as a new array of the same shape."""
        return np.array(r, copy=True)

    def result_dtype(self, r_dtype):
        """Scalar type of M^{-1} r for an input of the given type."""
        return np.result_type(r_dtype, np.float64)


def identity(n):
    return Preconditioner(n)


class Factorization:
    """Triangular factors of an incomplete factorization, plus drop stats."""

    def __init__(self, kind, tau, lower, upper, n_dropped, n_candidates,
                 boosts, factor_time):
        self.kind = kind
        self.tau = tau
        self.lower = lower
        self.upper = upper  # None for Cholesky-type
        self.n_dropped = n_dropped
        self.n_candidates = n_candidates
        self.boosts = boosts
        self.factor_time = factor_time

    @property
    def n(self):
        return self.lower.shape[0]

    @property
    def nnz_kept(self):
        total = np.count_nonzero(self.lower)
        if self.upper is not None:
            total += np.count_nonzero(self.upper) - self.n  # diag counted once
        return int(total)

    @property
    def dropped_fraction(self):
        if self.n_candidates == 0:
            return 0.0
        return self.n_dropped / self.n_candidates

    def stats(self):
        return {
            "kind": self.kind,
            "tau": self.tau,
            "nnz_kept": self.nnz_kept,
            "nnz_dropped_fraction": self.dropped_fraction,
            "factor_time": self.factor_time,
        }


def _drop_scale(diag_abs, tau):
    return tau * np.sqrt(diag_abs)


def _ic_attempt(a, tau, diag_abs):
    n = a.shape[0]
    w = np.array(a, copy=True)
    dropped = 0
    for j in range(n):
        pivot = w[j, j].real
        if not np.isfinite(pivot) or pivot <= 0.0:
            return None, dropped
        ljj = np.sqrt(pivot)
        w[j, j] = ljj
        col = w[j + 1:, j] / ljj
        if tau > 0.0 and col.size:
            keep_scale = _drop_scale(diag_abs[j + 1:] * diag_abs[j], tau)
            small = np.abs(col * ljj) < keep_scale
            dropped += int(small.sum())
            col[small] = 0.0
        w[j + 1:, j] = col
        w[j + 1:, j + 1:] -= np.outer(col, col.conj())
    return np.tril(w), dropped


def ic_drop_factor(a, tau):
    """Incomplete Cholesky with relative drop tolerance tau.

    Right-looking; entries are dropped before they update the trailing
    block. Nonpositive pivots trigger a diagonal boost of
    1e-8 * trace / n and a restart, at most three times.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise FactorizationError("matrix must be square")
    if tau < 0:
        raise FactorizationError("tau must be >= 0")
    start = time.perf_counter()
    n = a.shape[0]
    diag_abs = np.abs(np.diagonal(a))
    boost_unit = PIVOT_BOOST_REL * np.trace(a).real / max(n, 1)
    for boosts in range(MAX_BOOSTS + 1):
        shifted = a if boosts == 0 else a + (boosts * boost_unit) * np.eye(n)
        lower, dropped = _ic_attempt(shifted, tau, diag_abs)
        if lower is not None:
            elapsed = time.perf_counter() - start
            candidates = n * (n - 1) // 2
            return Factorization("ic-drop", tau, lower, None, dropped,
                                 candidates, boosts, elapsed)
    raise FactorizationError(
        f"nonpositive pivot persisted after {MAX_BOOSTS} diagonal boosts"
    )


def _ilu_attempt(a, tau, diag_abs):
    n = a.shape[0]
    w = np.array(a, copy=True)
    dropped = 0
    for j in range(n):
        pivot = w[j, j]
        if not np.isfinite(pivot) or abs(pivot) < 1e-300:
            return None, None, dropped
        col = w[j + 1:, j] / pivot
        row = w[j, j + 1:]
        if tau > 0.0 and col.size:
            keep_scale = _drop_scale(diag_abs[j + 1:] * diag_abs[j], tau)
            small_col = np.abs(col * pivot) < keep_scale
            small_row = np.abs(row) < keep_scale
            dropped += int(small_col.sum()) + int(small_row.sum())
            col[small_col] = 0.0
            row = np.where(small_row, 0.0, row)
            w[j, j + 1:] = row
        w[j + 1:, j] = col
        w[j + 1:, j + 1:] -= np.outer(col, row)
    lower = np.tril(w, -1) + np.eye(n, dtype=w.dtype)
    upper = np.triu(w)
    return lower, upper, dropped


def ilu_drop_factor(a, tau):
    """Incomplete LU (unit lower diagonal) with the same drop rule as IC.

    No pivoting: intended inputs are diagonally dominant collocation
    matrices. Vanishing pivots trigger the same boost-and-retry policy.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise FactorizationError("matrix must be square")
    if tau < 0:
        raise FactorizationError("tau must be >= 0")
    start = time.perf_counter()
    n = a.shape[0]
    diag_abs = np.abs(np.diagonal(a))
    boost_unit = PIVOT_BOOST_REL * np.trace(a).real / max(n, 1)
    for boosts in range(MAX_BOOSTS + 1):
        shifted = a if boosts == 0 else a + (boosts * boost_unit) * np.eye(n)
        lower, upper, dropped = _ilu_attempt(shifted, tau, diag_abs)
        if lower is not None:
            elapsed = time.perf_counter() - start
            candidates = n * (n - 1)
            return Factorization("ilu-drop", tau, lower, upper, dropped,
                                 candidates, boosts, elapsed)
    raise FactorizationError(
        f"vanishing pivot persisted after {MAX_BOOSTS} diagonal boosts"
    )


class FactorPreconditioner(Preconditioner):
    """Applies M^{-1} via two triangular solves against stored factors."""

    def __init__(self, factorization):
        super().__init__(factorization.n, quality=factorization.tau)
        self.kind = factorization.kind
        self.factorization = factorization

    def result_dtype(self, r_dtype):
        return np.result_type(r_dtype, self.factorization.lower.dtype)

    def apply_inverse(self, r):
        f = self.factorization
        z = solve_triangular(f.lower, r, lower=True, check_finite=False)
        if f.upper is None:
            return solve_triangular(f.lower, z, lower=True, trans="C",
                                    check_finite=False)
        return solve_triangular(f.upper, z, lower=False, check_finite=False)


class BlockJacobiPreconditioner(Preconditioner):
    """Inverse of the block-diagonal part of a compressed kernel matrix.

    Uses the (t, t) nearfield blocks of the leaf clusters, factorized once.
    """

    kind = "block-jacobi"

    def __init__(self, blocks):
        n = sum(rows.size for rows, _ in blocks)
        super().__init__(n)
        self.blocks = blocks  # list of (original row indices, lu_factor pair)
        self._factor_dtype = blocks[0][1][0].dtype if blocks else np.float64

    def result_dtype(self, r_dtype):
        return np.result_type(r_dtype, self._factor_dtype)

    def apply_inverse(self, r):
        r = np.asarray(r)
        out = np.empty(r.shape, dtype=self.result_dtype(r.dtype))
        for rows, lu in self.blocks:
            out[rows] = lu_solve(lu, r[rows], check_finite=False)
        return out


def block_jacobi_from_nearfield(h2):
    """Build the block Jacobi preconditioner from diagonal nearfield blocks."""
    tree = h2.block_tree.row_tree
    blocks = []
    covered = 0
    for block in h2.block_tree.leaves():
        if block.is_admissible or block.row_cluster is not block.col_cluster:
            continue
        rows = tree.label(block.row_cluster)
        g = h2.nearfield[block.id]
        lu = lu_factor(g, check_finite=False)
        if np.any(np.diagonal(lu[0]) == 0):
            raise FactorizationError(
                f"singular diagonal block at cluster {block.row_cluster.id}"
            )
        blocks.append((rows, lu))
        covered += rows.size
    if covered != h2.shape[0]:
        raise FactorizationError(
            "diagonal leaf blocks do not cover the index set; "
            "block Jacobi needs a square admissibility-driven block tree"
        )
    return BlockJacobiPreconditioner(blocks)


def apply_inverse_chunked(precond, r, threads=1):
    """Apply M^{-1} to a multivector, splitting columns across threads.

    Columns are partitioned into ceil(m / threads) sized chunks; each chunk
    is one blocked triangular-solve-shaped application.
    """
    r = np.asarray(r)
    if r.ndim == 1 or threads <= 1 or r.shape[1] <= 1:
        return precond.apply_inverse(r)
    m = r.shape[1]
    chunk = -(-m // threads)
    spans = [(i, min(i + chunk, m)) for i in range(0, m, chunk)]
    out = np.empty(r.shape, dtype=precond.result_dtype(r.dtype), order="F")

    def run(span):
        lo, hi = span
        out[:, lo:hi] = precond.apply_inverse(r[:, lo:hi])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, spans))
    return out
