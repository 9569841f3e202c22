"""Dense real matrix helpers shared by every other module.

Matrices are plain ``numpy.ndarray`` objects.  The helpers here validate
shapes and finiteness, symmetrize, and wrap the LAPACK eigen/SVD routines
behind the residual contracts the rest of the package relies on.
"""

import numpy as np
import scipy.linalg


class MatrixError(ValueError):
    """Raised for non-finite input, bad shapes or failed factorizations."""


SYM_TOL = 1e-12


def as_mat(M, name="matrix"):
    """Return `M` as a finite 2-D float array (copy)."""
    arr = np.array(M, dtype=float, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise MatrixError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MatrixError(f"{name} has non-finite entries")
    return arr


def as_symmat(M, name="matrix"):
    """Return `M` as an exactly symmetric array.

    The input must already be symmetric up to
    ``1e-12 * (1 + max|M|)``; it is then stored as ``(M + M.T) / 2``.
    """
    arr = as_mat(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixError(f"{name} must be square, got shape {arr.shape}")
    asym = np.max(np.abs(arr - arr.T), initial=0.0)
    if asym > SYM_TOL * (1.0 + np.max(np.abs(arr), initial=0.0)):
        raise MatrixError(f"{name} is not symmetric (max asymmetry {asym:.3e})")
    return 0.5 * (arr + arr.T)


def sym(M):
    """Symmetric part of a square array, no validation."""
    return 0.5 * (M + M.T)


def sym_eig(M):
    """Eigen-decomposition of a symmetric matrix.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray
        Orthonormal eigenvectors as columns, ``M @ V[:, i] = w[i] * V[:, i]``.
    """
    S = as_symmat(M)
    try:
        w, V = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"symmetric eigensolver did not converge: {exc}") from exc
    return w, V


def max_eig(M):
    """Largest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(sym(np.asarray(M, dtype=float)))[-1])


def min_eig(M):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(sym(np.asarray(M, dtype=float)))[0])


def null_space_basis(M, rtol=None):
    """Orthonormal basis of ker(M) as the columns of the returned array.

    An ``n x 0`` array is returned when the kernel is trivial.
    """
    arr = as_mat(M)
    return scipy.linalg.null_space(arr, rcond=rtol)


def block(rows):
    """Assemble a block matrix from a grid (list of lists) of arrays.

    Scalars are promoted to ``1 x 1`` blocks.  Non-conformal grids raise
    :class:`MatrixError`.
    """
    grid = [[np.atleast_2d(np.asarray(b, dtype=float)) for b in row] for row in rows]
    for r, row in enumerate(grid):
        heights = {b.shape[0] for b in row}
        if len(heights) != 1:
            raise MatrixError(f"block row {r} has mixed heights {sorted(heights)}")
    widths = [sum(b.shape[1] for b in row) for row in grid]
    if len(set(widths)) != 1:
        raise MatrixError(f"block rows have different total widths {widths}")
    try:
        return np.block(grid)
    except ValueError as exc:
        raise MatrixError(str(exc)) from exc


def block_diag(*mats):
    return scipy.linalg.block_diag(*[np.atleast_2d(np.asarray(m, dtype=float)) for m in mats])


def real_eigenvalues_general(M):
    """All eigenvalues of a general real square matrix (complex array)."""
    arr = as_mat(M)
    if arr.shape[0] != arr.shape[1]:
        raise MatrixError(f"matrix must be square, got shape {arr.shape}")
    try:
        return np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise MatrixError(f"general eigensolver did not converge: {exc}") from exc


def spectral_abscissa(M):
    """Largest real part among the eigenvalues of `M`."""
    return float(np.max(real_eigenvalues_general(M).real))


def min_singular_value(M):
    return float(np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)[-1])
