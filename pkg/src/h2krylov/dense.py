"""Dense building blocks: GEMM-style updates, Givens rotations, triangular solves.

Everything here works for both real (float64) and complex (complex128) data.
Matrices are plain numpy arrays; right-hand sides of multi-column objects are
kept column-major (Fortran order) so that each column is contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, SingularTriangularError

TRI_SINGULAR_TOL = 1e-300


def gemm_update(C, A, B, alpha=1.0, conj_transpose_a=False):
    """In-place update C += alpha * op(A) @ B with op(A) = A or A^*.

    Returns C. With alpha == 0 the buffer is left untouched bit for bit.
    """
    opA = A.conj().T if conj_transpose_a else A
    if opA.shape[1] != B.shape[0] or C.shape != (opA.shape[0], B.shape[1]):
        raise DimensionMismatchError(
            f"gemm_update: C{C.shape} += op(A){opA.shape} @ B{B.shape}"
        )
    if alpha == 0:
        return C
    C += alpha * (opA @ B)
    return C


@dataclass(frozen=True)
class GivensRotation:
    """Plane rotation G = [[c, s], [-conj(s), c]] with real c, mapping (a,b) to (r,0)."""

    c: float
    s: complex
    r: complex

    def apply(self, a, b):
        """Apply the rotation to the pair (a, b)."""
        return self.c * a + self.s * b, -np.conj(self.s) * a + self.c * b


def make_givens(a, b):
    """Build the Givens rotation eliminating b against a (LAPACK-style, c real).

    b == 0 yields the identity rotation; a == b == 0 gives c=1, s=0, r=0.
    """
    if b == 0:
        return GivensRotation(1.0, 0.0 * b, a)
    if a == 0:
        absb = abs(b)
        return GivensRotation(0.0, np.conj(b) / absb, absb)
    absa = abs(a)
    norm = np.hypot(absa, abs(b))
    phase = a / absa
    return GivensRotation(absa / norm, phase * np.conj(b) / norm, phase * norm)


def upper_tri_solve(R, b):
    """Solve R y = b by backward substitution for upper triangular R.

    Raises SingularTriangularError naming the offending index when a diagonal
    entry is (numerically) zero.
    """
    R = np.asarray(R)
    b = np.asarray(b)
    k = R.shape[0]
    if R.shape != (k, k) or b.shape[0] != k:
        raise DimensionMismatchError(f"upper_tri_solve: R{R.shape}, b{b.shape}")
    for i in range(k):
        if abs(R[i, i]) < TRI_SINGULAR_TOL:
            raise SingularTriangularError(f"zero diagonal entry at index {i}")
    y = np.zeros(k, dtype=np.result_type(R.dtype, b.dtype))
    for i in range(k - 1, -1, -1):
        y[i] = (b[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y
