"""Dense linear algebra primitives shared by the GHS and WLR solvers.

Matrices are plain 2-D float64 numpy arrays. Every function here is pure: inputs
are never modified and results are fresh arrays.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .errors import DegeneracyError, ParameterError, SvdConvergenceError

logger = logging.getLogger(__name__)

# A singular value counts as zero when it is at most RANK_RTOL * sigma_1.
RANK_RTOL = 1e-10
PINV_RTOL = 1e-12
COND_LIMIT = 1e12


@dataclass(frozen=True)
class SvdTriple:
    """Thin SVD ``A = U @ diag(singular_values) @ V.T``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self, rank: Optional[int] = None) -> np.ndarray:
        r = len(self.singular_values) if rank is None else rank
        return (self.U[:, :r] * self.singular_values[:r]) @ self.V[:, :r].T


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Validate ``A`` as a nonempty finite 2-D array and return it as float64."""
    arr = np.asarray(A, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ParameterError(f"{name} is empty (shape {arr.shape})")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return arr


def svd(A) -> SvdTriple:
    """Thin SVD of ``A`` with non-increasing singular values.

    The default divide-and-conquer driver is tried first; on a LAPACK
    convergence failure the slower ``gesvd`` driver is used before giving up.
    """
    A = as_matrix(A, "A")
    try:
        U, s, Vt = scipy.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        logger.warning(f"gesdd failed on {A.shape[0]}x{A.shape[1]} matrix, retrying with gesvd")
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(A.shape) from exc
    return SvdTriple(U=U, singular_values=s, V=Vt.T)


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    s = svd(A).singular_values
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def hard_threshold(A, r: int) -> np.ndarray:
    """Best rank-``r`` approximation of ``A`` (keep the ``r`` largest singular values)."""
    A = as_matrix(A, "A")
    if r < 0 or r > min(A.shape):
        raise ParameterError(f"rank {r} outside [0, {min(A.shape)}] for a {A.shape[0]}x{A.shape[1]} matrix")
    if r == 0:
        return np.zeros_like(A)
    return svd(A).reconstruct(r)


def orthonormal_basis(A1) -> np.ndarray:
    """Orthonormal basis ``Q`` (m x k) of the column space of a full-column-rank ``A1``.

    Raises:
        DegeneracyError: when ``A1`` is numerically rank deficient.
    """
    A1 = as_matrix(A1, "A1")
    k = A1.shape[1]
    rank = numerical_rank(A1)
    if rank < k:
        raise DegeneracyError(f"A1 has {k} columns but numerical rank {rank}", numerical_rank=rank)
    Q, R = scipy.linalg.qr(A1, mode="economic")
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def independent_columns(A, rtol: float) -> np.ndarray:
    """Sorted indices of a well-conditioned subset of the columns of ``A``.

    Uses QR with column pivoting and keeps the pivots whose ``|R_ii|`` exceeds
    ``rtol * |R_00|``. An all-zero ``A`` yields no columns.
    """
    A = as_matrix(A, "A")
    R, pivots = scipy.linalg.qr(A, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int)
    keep = int(np.sum(diag > rtol * diag[0]))
    return np.sort(pivots[:keep])


def _check_rows(Q: np.ndarray, A2: np.ndarray) -> None:
    if Q.shape[0] != A2.shape[0]:
        raise ParameterError(f"row mismatch: basis has {Q.shape[0]} rows, matrix has {A2.shape[0]}")


def project(Q, A2) -> np.ndarray:
    """``Q Q^T A2``: projection of the columns of ``A2`` onto span(Q)."""
    Q = np.asarray(Q, dtype=np.float64)
    A2 = as_matrix(A2, "A2")
    _check_rows(Q, A2)
    return Q @ (Q.T @ A2)


def project_orth(Q, A2) -> np.ndarray:
    """``A2 - Q Q^T A2``: projection onto the orthogonal complement of span(Q)."""
    A2 = as_matrix(A2, "A2")
    return A2 - project(Q, A2)


def hadamard(A, W) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if A.shape != W.shape:
        raise ParameterError(f"hadamard shape mismatch: {A.shape} vs {W.shape}")
    return A * W


def frob_norm_sq(A) -> float:
    A = np.asarray(A, dtype=np.float64)
    return float(np.einsum("ij,ij->", A, A))


def solve_gram(G: np.ndarray, rhs: np.ndarray, name: str) -> Tuple[np.ndarray, Optional[str]]:
    """Solve ``G X = rhs`` for a small symmetric Gram matrix ``G``.

    Falls back to an SVD pseudo-inverse (relative cutoff 1e-12) when ``G`` is
    singular or its condition number exceeds 1e12.

    Returns:
        The solution and, when the fallback was used, a warning message.
    """
    if G.shape[0] == 0 or rhs.size == 0:
        return np.zeros((G.shape[1], rhs.shape[1])), None
    cond = np.linalg.cond(G)
    if np.isfinite(cond) and cond <= COND_LIMIT:
        return scipy.linalg.solve(G, rhs, assume_a="sym"), None
    message = f"{name} Gram matrix is singular or ill-conditioned (cond={cond:.3g}); using pseudo-inverse"
    return scipy.linalg.pinv(G, rtol=PINV_RTOL) @ rhs, message
