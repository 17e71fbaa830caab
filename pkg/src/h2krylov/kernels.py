"""Kernel functions and dense collocation matrices.

Two 3D kernels are provided: the Laplace kernel 1/(4*pi*r) and the Helmholtz
kernel exp(i*kappa*r)/(4*pi*r). Collocation matrices sample the kernel at
point pairs; the singular diagonal is replaced by a dominant value that makes
the Laplace matrix symmetric positive definite (Gershgorin).

Every routine that needs pairwise kernel values goes through the same
broadcast evaluation, so compressed nearfield blocks and the dense
verification matrix agree bitwise entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularEvaluationError

INV_4PI = 1.0 / (4.0 * np.pi)

LAPLACE = "laplace3d"
HELMHOLTZ = "helmholtz3d"


@dataclass(frozen=True)
class KernelFunction:
    """A radial kernel g(x, y) of one of the supported kinds.

    kind is "laplace3d" (real, 1/(4*pi*r)) or "helmholtz3d" (complex,
    exp(i*kappa*r)/(4*pi*r)). kappa is ignored for laplace3d.
    """

    kind: str
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in (LAPLACE, HELMHOLTZ):
            raise ValueError(f"unknown kernel kind: {self.kind!r}")

    @property
    def dtype(self):
        return np.complex128 if self.kind == HELMHOLTZ else np.float64

    @property
    def is_spd(self):
        """True when the dominant-diagonal collocation matrix is SPD."""
        return self.kind == LAPLACE


def laplace3d():
    return KernelFunction(LAPLACE)


def helmholtz3d(kappa=1.0):
    return KernelFunction(HELMHOLTZ, kappa=float(kappa))


def distance_matrix(x, y):
    """Pairwise Euclidean distances, shape (len(x), len(y))."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def _values_from_distances(kernel, r, zero_mask):
    # zero entries are patched to 1 before dividing, then masked to 0
    safe = np.where(zero_mask, 1.0, r)
    if kernel.kind == LAPLACE:
        values = INV_4PI / safe
    else:
        values = np.exp(1j * kernel.kappa * r) * (INV_4PI / safe)
    if zero_mask.any():
        values[zero_mask] = 0.0
    return values


def kernel_matrix(kernel, x, y, allow_zero_distance=False):
    """Kernel values at all point pairs, shape (len(x), len(y)).

    Zero-distance pairs raise a singular-evaluation error unless
    allow_zero_distance is set, in which case those entries are written as
    0 and the caller is expected to overwrite them (see collocation
    diagonal rule).
    """
    r = distance_matrix(x, y)
    zero = r == 0.0
    if zero.any() and not allow_zero_distance:
        i, j = np.argwhere(zero)[0]
        raise SingularEvaluationError(
            f"kernel evaluated at coincident points (pair {i},{j})"
        )
    return _values_from_distances(kernel, r, zero)


def kernel_eval(kernel, x, y):
    """Kernel value at one point pair; raises on x = y."""
    return kernel_matrix(kernel, np.atleast_2d(x), np.atleast_2d(y))[0, 0]


def collocation_diagonal(kernel, points, chunk_rows=256):
    """Dominant diagonal values d_i = sum_{j != i} |g(x_i, x_j)| + 1.

    Both kernels have |g| = 1/(4*pi*r), so the row sums are kernel
    independent and real. Computed in row chunks; each row is summed whole,
    so the result does not depend on the chunk size.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    laplace = laplace3d()
    diag = np.empty(n, dtype=np.float64)
    for start in range(0, n, chunk_rows):
        stop = min(start + chunk_rows, n)
        rows = kernel_matrix(laplace, points[start:stop], points,
                             allow_zero_distance=True)
        diag[start:stop] = rows.sum(axis=1)
    return diag + 1.0


def dense_collocation_matrix(kernel, points, diag=None):
    """Full n x n collocation matrix with the dominant diagonal applied.

    This is the verification oracle the compressed representations are
    measured against. diag may be passed in to reuse precomputed values.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    matrix = kernel_matrix(kernel, points, points, allow_zero_distance=True)
    if diag is None:
        diag = collocation_diagonal(kernel, points)
    matrix[np.diag_indices(n)] = diag
    return matrix
