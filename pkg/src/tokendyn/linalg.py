"""Small dense symmetric linear algebra.

Only what the scenario analysis needs: the symmetric part of a square matrix
and a cyclic Jacobi eigensolver for matrices up to a few dozen rows.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, DomainError

SYMMETRY_RTOL = 1e-12
OFFDIAG_RTOL = 1e-14


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigen-decomposition S = Q diag(eigenvalues) Q^T.

    ``eigenvalues`` are sorted in descending order and ``eigenvectors`` holds
    the matching orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def top(self):
        return float(self.eigenvalues[0])

    def reconstruct(self):
        Q = self.eigenvectors
        return (Q * self.eigenvalues) @ Q.T


def as_matrix(M, name="matrix"):
    """Validate and return ``M`` as a finite 2-D float64 array."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def sym_part(M):
    """Return (M + M^T) / 2.

    The result is exactly symmetric: entry (i, j) and (j, i) are computed
    from the same two operands.
    """
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"sym_part needs a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def _rotate(A, V, p, q):
    apq = A[p, q]
    if apq == 0.0:
        return
    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
    t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.hypot(theta, 1.0))
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c

    col_p = A[:, p].copy()
    col_q = A[:, q].copy()
    A[:, p] = c * col_p - s * col_q
    A[:, q] = s * col_p + c * col_q
    row_p = A[p, :].copy()
    row_q = A[q, :].copy()
    A[p, :] = c * row_p - s * row_q
    A[q, :] = s * row_p + c * row_q
    A[p, q] = A[q, p] = 0.0

    vp = V[:, p].copy()
    vq = V[:, q].copy()
    V[:, p] = c * vp - s * vq
    V[:, q] = s * vp + c * vq


def eigh(S, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi.

    Sweeps over all (p, q) pairs in row order until the off-diagonal
    Frobenius norm drops below ``1e-14 * ||S||_F``.

    Raises
    ------
    DomainError
        If ``S`` has non-finite entries.
    ContractError
        If ``S`` is not symmetric to 1e-12 relative (Frobenius) tolerance.
    """
    S = as_matrix(S, "S")
    n = S.shape[0]
    if S.shape[1] != n:
        raise DimensionError(f"eigh needs a square matrix, got shape {S.shape}")
    norm = np.linalg.norm(S)
    if np.linalg.norm(S - S.T) > SYMMETRY_RTOL * norm:
        raise ContractError("eigh: input is not symmetric")

    A = sym_part(S)
    V = np.eye(n)
    target = OFFDIAG_RTOL * norm
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(A[offdiag] ** 2))
        if off <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(A, V, p, q)
    else:
        raise ContractError(f"eigh: Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return SymmetricSpectrum(eigenvalues=w[order], eigenvectors=V[:, order].copy())
