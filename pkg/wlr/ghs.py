"""Closed-form constrained low-rank solution (GHS) and one-shot singular value shrinkage."""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import ParameterError
from .matrix_core import RANK_RTOL, as_matrix, orthonormal_basis, project, project_orth, svd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PartitionedInput:
    """A data matrix split as ``(A1 | A2)`` with a target rank ``r >= k``."""

    A1: np.ndarray
    A2: np.ndarray
    r: int

    def __post_init__(self):
        A1 = as_matrix(self.A1, "A1")
        A2 = as_matrix(self.A2, "A2")
        if A1.shape[0] != A2.shape[0]:
            raise ParameterError(f"A1 has {A1.shape[0]} rows but A2 has {A2.shape[0]}")
        m, k = A1.shape
        n = k + A2.shape[1]
        if not k <= self.r <= min(m, n):
            raise ParameterError(f"rank r={self.r} must satisfy k={k} <= r <= min(m, n)={min(m, n)}")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "A2", A2)

    @property
    def k(self) -> int:
        return self.A1.shape[1]


@dataclass
class GhsResult:
    x2: np.ndarray
    unique: bool = True
    warnings: List[str] = field(default_factory=list)


def ghs_solve(A1, A2, r: int) -> GhsResult:
    """Minimize ``||A2 - X2||_F`` subject to ``rank(A1 | X2) <= r``.

    The minimizer is ``P(A2) + H_{r-k}(P_perp(A2))`` where ``P`` projects onto
    the column space of ``A1``. When the (r-k)-th and (r-k+1)-th singular values
    of ``P_perp(A2)`` tie, the minimizer is not unique; a warning is attached.

    Raises:
        DegeneracyError: ``A1`` is numerically rank deficient.
        ParameterError: shapes or rank out of range.
    """
    problem = PartitionedInput(A1, A2, r)
    Q = orthonormal_basis(problem.A1)
    in_span = project(Q, problem.A2)
    q = problem.r - problem.k
    result = GhsResult(x2=in_span)
    if q == 0:
        return result

    residual = project_orth(Q, problem.A2)
    triple = svd(residual)
    s = triple.singular_values
    result.x2 = in_span + triple.reconstruct(q)
    if q < len(s) and s[0] > 0:
        gap_tol = RANK_RTOL * s[0]
        if s[q - 1] > gap_tol and s[q - 1] - s[q] <= gap_tol:
            message = f"sigma_{q} and sigma_{q + 1} of the orthogonal residual coincide ({s[q - 1]:.6g}); solution not unique"
            logger.warning(message)
            result.unique = False
            result.warnings.append(message)
    return result


def svt_shrink(A, tau: float) -> np.ndarray:
    """Soft-threshold the singular values of ``A`` by ``tau``."""
    if tau < 0:
        raise ParameterError(f"tau must be non-negative, got {tau}")
    triple = svd(A)
    shrunk = np.maximum(triple.singular_values - tau, 0.0)
    return (triple.U * shrunk) @ triple.V.T


def default_tau(m: int, n1: int) -> float:
    """Shrinkage scale ``5 * sqrt(m * n1)`` for an m x n1 first batch."""
    return 5.0 * float(np.sqrt(m * n1))
