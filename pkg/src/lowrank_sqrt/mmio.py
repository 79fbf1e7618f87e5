"""Matrix Market input and output (thin wrappers over :mod:`scipy.io`)."""

from __future__ import annotations

import numpy as np
import scipy.io
import scipy.sparse

__all__ = ["read_matrix", "write_matrix"]


def read_matrix(path) -> np.ndarray:
    """Read a Matrix Market file into a dense float array.

    Symmetric storage is expanded.  Vectors come back as ``(n, 1)``.
    """
    M = scipy.io.mmread(str(path))
    if scipy.sparse.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return M


def write_matrix(path, M, comment: str = "", symmetric: bool = False) -> None:
    """Write a dense array in Matrix Market array format.

    With ``symmetric=True`` only the lower triangle is stored; the matrix
    must then be exactly symmetric.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if symmetric and not np.array_equal(M, M.T):
        raise ValueError("matrix is not symmetric")
    scipy.io.mmwrite(str(path), M, comment=comment, field="real",
                     symmetry="symmetric" if symmetric else "general")
