"""Background estimation pipelines built on the WLR solver.

``batch_background`` learns which frames look like pure background, weights a
subset of them heavily and solves one WLR problem over the whole sequence.
``incremental_background`` walks the sequence in contiguous batches, using
background-like columns of the previous batch as the weighted prior block.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from skimage.filters import threshold_otsu

from .errors import DegeneracyError, ParameterError, PipelineError, WlrError
from .ghs import default_tau, ghs_solve, svt_shrink
from .matrix_core import as_matrix, hard_threshold, independent_columns
from .model import BgParams
from .solver import BlockWeight, solve

logger = logging.getLogger(__name__)

OTSU_BINS = 64
MODE_BINS = 10
# Prior columns whose pivoted-QR diagonal falls below this fraction of the first are dropped.
PRIOR_RTOL = 1e-4


@dataclass(frozen=True)
class IndexSet:
    """Columns judged closest to background.

    ``indices`` is sorted; ``ranked`` lists the same columns by increasing ratio.
    """

    indices: Tuple[int, ...]
    ranked: Tuple[int, ...]
    ratios: np.ndarray
    eps1: float
    mode: float

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class BatchDiagnostics:
    batch: int
    indices: Tuple[int, ...]
    k: int
    r: int
    iterations: int
    converged: bool
    objective: float
    objective_trace: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def to_row(self) -> dict:
        return {
            "batch": self.batch,
            "S": " ".join(str(j) for j in self.indices),
            "k": self.k,
            "r": self.r,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective": self.objective,
            "objective_trace": " ".join(f"{v:.10g}" for v in self.objective_trace),
        }


@dataclass
class Decomposition:
    """``A = B + F`` with ``B`` low rank, columns in input order."""

    B: np.ndarray
    F: np.ndarray
    rank: int
    diagnostics: List[BatchDiagnostics] = field(default_factory=list)
    frames_meta: Optional[Tuple[int, int]] = None

    @property
    def converged(self) -> bool:
        return all(d.converged for d in self.diagnostics)

    def foreground_threshold(self, eps1: Optional[float] = None) -> float:
        return otsu_threshold(self.F) if eps1 is None else float(eps1)

    def denoised_foreground(self, eps1: Optional[float] = None) -> np.ndarray:
        """``F`` with every entry of magnitude at most ``eps1`` set to zero."""
        threshold = self.foreground_threshold(eps1)
        return np.where(np.abs(self.F) > threshold, self.F, 0.0)

    def diagnostics_frame(self) -> pd.DataFrame:
        columns = ["batch", "S", "k", "r", "iterations", "converged", "objective", "objective_trace"]
        return pd.DataFrame([d.to_row() for d in self.diagnostics], columns=columns)


def otsu_threshold(F: np.ndarray) -> float:
    """Two-class Otsu threshold of ``|F|`` over a 64-bin histogram."""
    return float(threshold_otsu(np.abs(np.asarray(F, dtype=np.float64)), nbins=OTSU_BINS))


def ratio_scores(B_in: np.ndarray, F_in: np.ndarray, eps1: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """Per-column foreground-area ratio ``colsum(|F| > eps1) / max(colsum(B > 0), 1)``."""
    threshold = otsu_threshold(F_in) if eps1 is None else float(eps1)
    LF = np.abs(F_in) > threshold
    LB = B_in > 0
    ratios = LF.sum(axis=0) / np.maximum(LB.sum(axis=0), 1)
    return ratios.astype(np.float64), threshold


def ratio_mode(ratios: np.ndarray) -> float:
    """Center of the most populated of 10 equal-width bins; ties go to the lower bin."""
    counts, edges = np.histogram(ratios, bins=MODE_BINS)
    i = int(np.argmax(counts))
    return float((edges[i] + edges[i + 1]) / 2)


def _foreground_is_zero(B_in: np.ndarray, F_in: np.ndarray) -> bool:
    return float(np.max(np.abs(F_in))) <= 1e-9 * max(1.0, float(np.max(np.abs(B_in))))


def _index_set(candidates: np.ndarray, ratios: np.ndarray, eps1: float, mode: float,
               limit: Optional[int] = None) -> IndexSet:
    order = candidates[np.argsort(ratios[candidates], kind="stable")]
    if limit is not None:
        order = order[:limit]
    return IndexSet(
        indices=tuple(sorted(int(j) for j in order)),
        ranked=tuple(int(j) for j in order),
        ratios=ratios,
        eps1=eps1,
        mode=mode,
    )


def _background_candidates(ratios: np.ndarray, mode: float) -> np.ndarray:
    if ratios.max() - ratios.min() <= 1e-12:
        return np.arange(len(ratios))
    below = np.flatnonzero(ratios < mode)
    if below.size == 0:
        return np.array([int(np.argmin(ratios))])
    return below


def learn_bg_indices(B_in, F_in, eps1: Optional[float] = None) -> IndexSet:
    """Columns whose foreground-area ratio falls below the mode of all ratios.

    ``F_in`` is binarized at ``eps1`` (Otsu threshold of ``|F_in|`` by default),
    ``B_in`` at zero. Falls back to the single lowest-ratio column when no
    ratio is below the mode; returns every column when ``F_in`` vanishes.
    """
    B_in = as_matrix(B_in, "B_in")
    F_in = as_matrix(F_in, "F_in")
    if B_in.shape != F_in.shape:
        raise ParameterError(f"B_in shape {B_in.shape} does not match F_in shape {F_in.shape}")
    n = B_in.shape[1]
    if _foreground_is_zero(B_in, F_in):
        return _index_set(np.arange(n), np.zeros(n), 0.0, 0.0)
    ratios, threshold = ratio_scores(B_in, F_in, eps1)
    mode = ratio_mode(ratios)
    return _index_set(_background_candidates(ratios, mode), ratios, threshold, mode)


def score_columns(A_prev, B, k_max: int, eps1: Optional[float] = None) -> IndexSet:
    """At most ``k_max`` columns of ``A_prev`` closest to the background ``B`` (at least one)."""
    A_prev = as_matrix(A_prev, "A_prev")
    B = as_matrix(B, "B")
    if A_prev.shape != B.shape:
        raise ParameterError(f"A_prev shape {A_prev.shape} does not match B shape {B.shape}")
    if k_max < 1:
        raise ParameterError(f"k_max must be at least 1, got {k_max}")
    F = A_prev - B
    n = A_prev.shape[1]
    if _foreground_is_zero(B, F):
        return _index_set(np.arange(n), np.zeros(n), 0.0, 0.0, limit=k_max)
    ratios, threshold = ratio_scores(B, F, eps1)
    mode = ratio_mode(ratios)
    return _index_set(_background_candidates(ratios, mode), ratios, threshold, mode, limit=k_max)


def split_batches(n: int, p: int) -> List[Tuple[int, int]]:
    """Contiguous ``[lo, hi)`` ranges of ``ceil(n / p)`` frames; the last may be shorter."""
    if p < 1:
        raise ParameterError(f"batch count p must be at least 1, got {p}")
    size = math.ceil(n / p)
    batches = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
    for j, (lo, hi) in enumerate(batches, start=1):
        if hi - lo < 2:
            raise ParameterError(f"batch {j} has {hi - lo} frame(s); every batch needs at least 2 (n={n}, p={p})")
    if len(batches) != p:
        logger.warning(f"{n} frames in batches of {size} give {len(batches)} batches, not {p}")
    return batches


def _fit_block(A1: np.ndarray, A2: np.ndarray, r: int, params: BgParams, rng: np.random.Generator,
               batch: int, indices: Tuple[int, ...]) -> Tuple[np.ndarray, np.ndarray, BatchDiagnostics]:
    m, k = A1.shape
    W = BlockWeight.uniform(m, k, params.alpha, params.beta, rng)
    try:
        if params.solver == "ghs":
            result = ghs_solve(A1, A2, r)
            diag = BatchDiagnostics(batch=batch, indices=indices, k=k, r=r, iterations=0, converged=True,
                                    objective=float(np.sum((A2 - result.x2) ** 2)), warnings=result.warnings)
            return A1.copy(), result.x2, diag
        state, report = solve(A1, A2, W, r, eps=params.eps, max_iter=params.max_iter, workers=params.workers)
    except WlrError as e:
        raise PipelineError(batch, e)
    diag = BatchDiagnostics(
        batch=batch, indices=indices, k=k, r=r, iterations=report.iterations, converged=report.converged,
        objective=report.final_objective, objective_trace=list(report.objective_trace), warnings=report.warnings,
    )
    return state.X1, state.x2(), diag


def batch_background(A, params: BgParams, frames_meta: Optional[Tuple[int, int]] = None) -> Decomposition:
    """Single WLR solve over the whole sequence with learned background columns as the weighted block.

    Raises:
        ParameterError: fewer than 2 frames, ``k >= n`` or ``r > min(m, n)``.
        PipelineError: the solver failed.
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    if n < 2:
        raise ParameterError(f"need at least 2 frames, got {n}")
    B_in = hard_threshold(A, params.init_rank)
    S = learn_bg_indices(B_in, A - B_in, eps1=params.eps1)
    k = math.ceil(len(S) / params.i1)
    r = k + params.i2
    if k >= n:
        raise ParameterError(f"k={k} prior columns leave nothing to fit among n={n} frames")
    if r > min(m, n):
        raise ParameterError(f"rank r={r} exceeds min(m, n)={min(m, n)}")

    rng = np.random.default_rng(params.seed)
    chosen = np.sort(rng.choice(np.array(S.indices), size=k, replace=False))
    rest = np.setdiff1d(np.arange(n), chosen)
    X1, X2, diag = _fit_block(A[:, chosen], A[:, rest], r, params, rng, batch=1,
                              indices=tuple(int(j) for j in chosen))
    B = np.empty_like(A)
    B[:, chosen] = X1
    B[:, rest] = X2
    logger.info(f"Batch background: |S|={len(S)} k={k} r={r} iterations={diag.iterations}")
    return Decomposition(B=B, F=A - B, rank=r, diagnostics=[diag], frames_meta=frames_meta)


def incremental_background(A, params: BgParams, frames_meta: Optional[Tuple[int, int]] = None) -> Decomposition:
    """Batch-incremental background estimation over ``params.p`` contiguous batches.

    The first batch is initialized by singular value shrinkage and serves as its
    own predecessor. For each batch, up to ``k_max`` background-like columns of
    the previous batch (raw data or recovered background, per
    ``params.prior_source``) form the weighted block; the fitted block over the
    current batch is its background and becomes the next predecessor.
    """
    A = as_matrix(A, "A")
    m, n = A.shape
    batches = split_batches(n, params.p)
    lo, hi = batches[0]
    tau = params.tau if params.tau is not None else default_tau(m, hi - lo)
    prev_A = A[:, lo:hi]
    prev_B = svt_shrink(prev_A, tau)
    rng = np.random.default_rng(params.seed)
    B = np.empty_like(A)
    diagnostics = []
    max_rank = 0

    for j, (lo, hi) in enumerate(batches, start=1):
        A_j = A[:, lo:hi]
        k_max = params.k_max
        notes = []
        if k_max > prev_A.shape[1]:
            k_max = prev_A.shape[1]
            notes.append(f"k_max {params.k_max} clamped to previous batch width {k_max}")
            logger.warning(f"batch {j}: {notes[-1]}")
        S = score_columns(prev_A, prev_B, k_max, eps1=params.eps1)
        source = prev_A if params.prior_source == "data" else prev_B
        indices = np.asarray(S.indices, dtype=int)
        keep = independent_columns(source[:, indices], PRIOR_RTOL)
        if keep.size == 0:
            raise PipelineError(j, DegeneracyError("prior columns are all zero", numerical_rank=0))
        if keep.size < indices.size:
            notes.append(f"{indices.size - keep.size} of {indices.size} prior columns are linearly "
                         f"dependent and were dropped")
            logger.warning(f"batch {j}: {notes[-1]}")
            indices = indices[keep]
        k = indices.size
        r = k + params.ir
        if r > min(m, k + A_j.shape[1]):
            raise PipelineError(j, ParameterError(f"rank r={r} exceeds min(m, n)={min(m, k + A_j.shape[1])}"))
        prior = source[:, indices]
        # Indices are reported in frame numbers of the previous batch.
        prev_lo = batches[j - 2][0] if j > 1 else lo
        _, X2, diag = _fit_block(prior, A_j, r, params, rng, batch=j,
                                 indices=tuple(prev_lo + int(i) for i in indices))
        diag.warnings = notes + diag.warnings
        diagnostics.append(diag)
        B[:, lo:hi] = X2
        max_rank = max(max_rank, r)
        logger.info(f"Batch {j}/{len(batches)}: frames {lo}-{hi - 1} k={k} r={r} iterations={diag.iterations}")
        prev_A, prev_B = A_j, X2

    return Decomposition(B=B, F=A - B, rank=max_rank, diagnostics=diagnostics, frames_meta=frames_meta)


def baseline_background(A, rank: int, frames_meta: Optional[Tuple[int, int]] = None) -> Decomposition:
    """Unweighted rank-``rank`` truncated SVD background, for comparison."""
    A = as_matrix(A, "A")
    B = hard_threshold(A, rank)
    return Decomposition(B=B, F=A - B, rank=rank, frames_meta=frames_meta)
