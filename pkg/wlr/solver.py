"""Alternating minimization for block-weighted low-rank approximation (WLR).

The objective over the factors ``(X1, C, B, D)`` is

    F = ||(A1 - X1) * W1||_F^2 + ||A2 - X1 C - B D||_F^2

and one sweep updates X1, C, B and D in that order, each to the exact
minimizer of F with the other three blocks held fixed. Every sweep also checks
that the objective decrease equals the sum of the five block-change norms
and that the two lower bounds derived from it hold.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from .errors import DivergenceError, ParameterError
from .matrix_core import COND_LIMIT, PINV_RTOL, frob_norm_sq, solve_gram, svd

logger = logging.getLogger(__name__)

IDENTITY_RTOL = 1e-6
MONOTONE_SLACK = 1e-9
# Upper bound on the number of float64 entries in one batch of stacked row systems.
ROW_BLOCK_ENTRIES = 2 ** 22


@dataclass(frozen=True)
class BlockWeight:
    """Weights ``W = (W1 | 1)``: entries of ``W1`` lie in ``[alpha, beta]``, the ``A2`` block is all ones."""

    W1: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=np.float64)
        if self.alpha <= 0 or self.beta < self.alpha:
            raise ParameterError(f"need 0 < alpha <= beta, got alpha={self.alpha}, beta={self.beta}")
        if W1.ndim != 2 or W1.size == 0:
            raise ParameterError(f"W1 must be a nonempty 2-D array, got shape {W1.shape}")
        if W1.min() < self.alpha or W1.max() > self.beta:
            raise ParameterError(f"W1 entries must lie in [{self.alpha}, {self.beta}]")
        object.__setattr__(self, "W1", W1)

    @classmethod
    def uniform(cls, m: int, k: int, alpha: float, beta: float, rng: np.random.Generator) -> "BlockWeight":
        """Entries drawn uniformly from ``[alpha, beta]``."""
        return cls(W1=rng.uniform(alpha, beta, size=(m, k)), alpha=alpha, beta=beta)

    @classmethod
    def constant(cls, m: int, k: int, value: float = 1.0) -> "BlockWeight":
        return cls(W1=np.full((m, k), float(value)), alpha=value, beta=value)

    @property
    def lam(self) -> float:
        """Smallest weight, the quantity that drives the solution toward the GHS limit."""
        return float(self.W1.min())


@dataclass(frozen=True)
class FactorState:
    X1: np.ndarray
    C: np.ndarray
    B: np.ndarray
    D: np.ndarray

    @property
    def k(self) -> int:
        return self.X1.shape[1]

    @property
    def q(self) -> int:
        return self.B.shape[1]

    def x2(self) -> np.ndarray:
        return self.X1 @ self.C + self.B @ self.D

    def approximation(self) -> np.ndarray:
        """The rank <= r matrix ``(X1 | X1 C + B D)``."""
        return np.hstack([self.X1, self.x2()])

    def validate(self, m: int, n: int, k: int, r: int) -> None:
        q = r - k
        expected = {"X1": (m, k), "C": (k, n - k), "B": (m, q), "D": (q, n - k)}
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ParameterError(f"factor {name} has shape {actual}, expected {shape}")


@dataclass
class SolveReport:
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    decrease_identity_residuals: List[float] = field(default_factory=list)
    block_change_sums: List[float] = field(default_factory=list)
    background_change_margins: List[float] = field(default_factory=list)
    weighted_change_margins: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    gradient_norm: Optional[float] = None

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def decreases(self) -> List[float]:
        t = self.objective_trace
        return [t[p] - t[p + 1] for p in range(len(t) - 1)]

    @property
    def sqrt_decrease_sum(self) -> float:
        """Partial sum of ``sqrt(m_p - m_{p+1})``; a bounded value is consistent with convergent iterates."""
        return float(sum(np.sqrt(max(d, 0.0)) for d in self.decreases))

    def is_monotone(self, slack: float = MONOTONE_SLACK) -> bool:
        return all(d >= -slack for d in self.decreases)

    def trace_frame(self) -> pd.DataFrame:
        """One row per sweep: iteration, objective, decrease and identity residual."""
        decreases = self.decreases
        return pd.DataFrame({
            "iteration": np.arange(1, len(decreases) + 1),
            "objective": self.objective_trace[1:],
            "decrease": decreases,
            "identity_residual": self.decrease_identity_residuals,
        })


def _check_problem(A1, A2) -> Tuple[np.ndarray, np.ndarray]:
    A1 = np.asarray(A1, dtype=np.float64)
    A2 = np.asarray(A2, dtype=np.float64)
    if A1.ndim != 2 or A2.ndim != 2 or A1.size == 0:
        raise ParameterError(f"A1 must be nonempty 2-D and A2 2-D, got {A1.shape} and {A2.shape}")
    if A1.shape[0] != A2.shape[0]:
        raise ParameterError(f"A1 has {A1.shape[0]} rows but A2 has {A2.shape[0]}")
    if not (np.all(np.isfinite(A1)) and np.all(np.isfinite(A2))):
        raise ParameterError("input contains NaN or Inf entries")
    return A1, A2


def _check_weight(A1: np.ndarray, W: BlockWeight) -> None:
    if W.W1.shape != A1.shape:
        raise ParameterError(f"W1 shape {W.W1.shape} does not match A1 shape {A1.shape}")


def objective(A1, A2, W: BlockWeight, s: FactorState) -> float:
    """``||(A1 - X1) * W1||_F^2 + ||A2 - X1 C - B D||_F^2``."""
    A1, A2 = _check_problem(A1, A2)
    _check_weight(A1, W)
    s.validate(A1.shape[0], A1.shape[1] + A2.shape[1], A1.shape[1], A1.shape[1] + s.q)
    return frob_norm_sq((A1 - s.X1) * W.W1) + frob_norm_sq(A2 - s.x2())


def objective_gradient(A1, A2, W: BlockWeight, s: FactorState) -> Dict[str, np.ndarray]:
    """Analytic gradient of the objective with respect to each factor block."""
    A1, A2 = _check_problem(A1, A2)
    R2 = A2 - s.x2()
    return {
        "X1": -2.0 * (A1 - s.X1) * W.W1 ** 2 - 2.0 * R2 @ s.C.T,
        "C": -2.0 * s.X1.T @ R2,
        "B": -2.0 * R2 @ s.D.T,
        "D": -2.0 * s.B.T @ R2,
    }


def gradient_norm(A1, A2, W: BlockWeight, s: FactorState) -> float:
    grads = objective_gradient(A1, A2, W, s)
    return float(np.sqrt(sum(frob_norm_sq(g) for g in grads.values())))


def _solve_row_block(M: np.ndarray, E: np.ndarray, bound: np.ndarray, notes: Optional[List[str]]) -> np.ndarray:
    out = np.empty_like(E)
    risky = bound > COND_LIMIT
    if risky.any():
        exact = np.linalg.cond(M[risky])
        bad_local = np.flatnonzero(risky)[~(np.isfinite(exact) & (exact <= COND_LIMIT))]
    else:
        bad_local = np.empty(0, dtype=int)
    good = np.ones(len(E), dtype=bool)
    good[bad_local] = False
    if good.any():
        out[good] = np.linalg.solve(M[good], E[good][..., None])[..., 0]
    for i in bad_local:
        out[i] = E[i] @ scipy.linalg.pinv(M[i], rtol=PINV_RTOL)
    if len(bad_local) and notes is not None:
        notes.append(f"X1: {len(bad_local)} ill-conditioned row systems solved by pseudo-inverse")
    return out


def update_x1(A1, A2, W: BlockWeight, s: FactorState, workers: int = 1,
              notes: Optional[List[str]] = None) -> np.ndarray:
    """Row-wise exact minimizer of the objective in ``X1``.

    Row ``i`` solves ``X1[i] (diag(W1[i]^2) + C C^T) = E[i]`` with
    ``E = A1 * W1^2 + (A2 - B D) C^T``. Rows are solved in stacked blocks;
    with ``workers > 1`` the blocks run on a thread pool. Each block writes a
    disjoint slice of the output, so the result does not depend on scheduling.

    Rows whose cheap condition bound ``(max W^2 + ||C||_2^2) / min W^2``
    exceeds 1e12 are checked exactly and, if still ill-conditioned, solved
    by pseudo-inverse.
    """
    A1, A2 = _check_problem(A1, A2)
    _check_weight(A1, W)
    m, k = A1.shape
    W2 = W.W1 ** 2
    E = A1 * W2 + (A2 - s.B @ s.D) @ s.C.T
    CCt = s.C @ s.C.T
    c_norm_sq = float(np.linalg.eigvalsh(CCt)[-1])
    bound = (W2.max(axis=1) + c_norm_sq) / W2.min(axis=1)
    diag = np.arange(k)
    X1 = np.empty((m, k))

    def solve_rows(lo: int, hi: int) -> List[str]:
        local_notes: List[str] = []
        M = np.broadcast_to(CCt, (hi - lo, k, k)).copy()
        M[:, diag, diag] += W2[lo:hi]
        X1[lo:hi] = _solve_row_block(M, E[lo:hi], bound[lo:hi], local_notes)
        return local_notes

    chunk = max(1, ROW_BLOCK_ENTRIES // (k * k))
    spans = [(lo, min(lo + chunk, m)) for lo in range(0, m, chunk)]
    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            collected = list(pool.map(lambda span: solve_rows(*span), spans))
    else:
        collected = [solve_rows(lo, hi) for lo, hi in spans]
    if notes is not None:
        for block_notes in collected:
            notes.extend(block_notes)
    return X1


def update_c(A1, A2, s: FactorState, notes: Optional[List[str]] = None) -> np.ndarray:
    """``C = (X1^T X1)^{-1} X1^T (A2 - B D)``."""
    A1, A2 = _check_problem(A1, A2)
    C, warning = solve_gram(s.X1.T @ s.X1, s.X1.T @ (A2 - s.B @ s.D), "X1^T X1")
    if warning and notes is not None:
        notes.append(warning)
    return C


def update_b(A1, A2, s: FactorState, notes: Optional[List[str]] = None) -> np.ndarray:
    """``B = (A2 - X1 C) D^T (D D^T)^{-1}``."""
    A1, A2 = _check_problem(A1, A2)
    if s.q == 0:
        return s.B.copy()
    R = A2 - s.X1 @ s.C
    Bt, warning = solve_gram(s.D @ s.D.T, s.D @ R.T, "D D^T")
    if warning and notes is not None:
        notes.append(warning)
    return Bt.T


def update_d(A1, A2, s: FactorState, notes: Optional[List[str]] = None) -> np.ndarray:
    """``D = (B^T B)^{-1} B^T (A2 - X1 C)``."""
    A1, A2 = _check_problem(A1, A2)
    if s.q == 0:
        return s.D.copy()
    R = A2 - s.X1 @ s.C
    D, warning = solve_gram(s.B.T @ s.B, s.B.T @ R, "B^T B")
    if warning and notes is not None:
        notes.append(warning)
    return D


def auto_init(A1, A2, r: int) -> FactorState:
    """Warm start at the constrained limit: ``X1 = A1``, ``C`` by least squares, ``(B, D)`` from the residual SVD.

    ``B`` and ``D`` split the truncated singular values evenly (``U sqrt(S)``, ``sqrt(S) V^T``).
    """
    A1, A2 = _check_problem(A1, A2)
    m, k = A1.shape
    n2 = A2.shape[1]
    q = r - k
    if n2 == 0:
        C = np.zeros((k, 0))
    else:
        C = scipy.linalg.lstsq(A1, A2)[0]
    if q == 0:
        return FactorState(X1=A1.copy(), C=C, B=np.zeros((m, 0)), D=np.zeros((0, n2)))
    residual = A2 - A1 @ C
    triple = svd(residual)
    root = np.sqrt(triple.singular_values[:q])
    return FactorState(X1=A1.copy(), C=C, B=triple.U[:, :q] * root, D=(triple.V[:, :q] * root).T)


def random_init(m: int, n: int, k: int, r: int, seed: int = 0) -> FactorState:
    rng = np.random.default_rng(seed)
    q = r - k
    return FactorState(
        X1=rng.standard_normal((m, k)),
        C=rng.standard_normal((k, n - k)),
        B=rng.standard_normal((m, q)),
        D=rng.standard_normal((q, n - k)),
    )


def _ensure_finite(block: np.ndarray, name: str, iteration: int) -> None:
    if not np.all(np.isfinite(block)):
        raise DivergenceError(iteration=iteration, block=name)


def solve(A1, A2, W: BlockWeight, r: int, init: Union[str, FactorState] = "auto",
          eps: float = 1e-7, max_iter: int = 500, seed: int = 0,
          workers: int = 1, grad_tol: Optional[float] = None) -> Tuple[FactorState, SolveReport]:
    """Run WLR sweeps until the relative objective decrease drops below ``eps``.

    Args:
        A1: m x k prior block (heavily weighted).
        A2: m x (n - k) block to approximate.
        W: weights for the ``A1`` block.
        r: target rank, ``k <= r <= min(m, n)``.
        init: ``"auto"``, ``"random"`` or an explicit FactorState.
        eps: stop when ``(m_p - m_{p+1}) / max(1, m_p) < eps``.
        max_iter: sweep cap; reaching it leaves ``converged`` False.
        seed: seed for ``init="random"``.
        workers: threads for the X1 row solves.
        grad_tol: when set, convergence also requires a gradient norm of at most
            ``grad_tol * (1 + objective)``; otherwise sweeps continue.

    Returns:
        The final factors and a SolveReport with the objective trace and diagnostics.

    Raises:
        ParameterError: inconsistent shapes or ranks.
        DivergenceError: an iterate became non-finite.

    A sweep that raises the objective by more than rounding slack is discarded: the
    previous factors are returned and ``converged`` stays False.
    """
    A1, A2 = _check_problem(A1, A2)
    _check_weight(A1, W)
    m, k = A1.shape
    n = k + A2.shape[1]
    if not k <= r <= min(m, n):
        raise ParameterError(f"rank r={r} must satisfy k={k} <= r <= min(m, n)={min(m, n)}")
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be at least 1, got {max_iter}")
    if grad_tol is not None and grad_tol <= 0:
        raise ParameterError(f"grad_tol must be positive, got {grad_tol}")

    if isinstance(init, FactorState):
        state = init
    elif init == "auto":
        state = auto_init(A1, A2, r)
    elif init == "random":
        state = random_init(m, n, k, r, seed)
    else:
        raise ParameterError(f"unknown init {init!r}")
    state.validate(m, n, k, r)

    report = SolveReport()
    warned_blocks = set()
    m_p = objective(A1, A2, W, state)
    report.objective_trace.append(m_p)
    logger.debug(f"WLR start: m={m} n={n} k={k} r={r} objective={m_p:.6g}")

    for p in range(1, max_iter + 1):
        notes: List[str] = []
        X1 = update_x1(A1, A2, W, state, workers=workers, notes=notes)
        _ensure_finite(X1, "X1", p)
        s1 = FactorState(X1, state.C, state.B, state.D)
        C = update_c(A1, A2, s1, notes)
        _ensure_finite(C, "C", p)
        s2 = FactorState(X1, C, state.B, state.D)
        B = update_b(A1, A2, s2, notes)
        _ensure_finite(B, "B", p)
        s3 = FactorState(X1, C, B, state.D)
        D = update_d(A1, A2, s3, notes)
        _ensure_finite(D, "D", p)
        new_state = FactorState(X1, C, B, D)

        for note in notes:
            block = note.split(" ", 1)[0]
            if block not in warned_blocks:
                warned_blocks.add(block)
                logger.warning(f"iteration {p}: {note}")
                report.warnings.append(f"iteration {p}: {note}")

        m_next = objective(A1, A2, W, new_state)
        if m_next - m_p > MONOTONE_SLACK + 1e-12 * m_p:
            message = (f"iteration {p}: objective increased from {m_p:.6g} to {m_next:.6g}; "
                       f"stopping at the previous iterate")
            logger.warning(message)
            report.warnings.append(message)
            break
        _record_sweep(report, state, new_state, W, m_p, m_next, p)
        report.objective_trace.append(m_next)
        report.iterations = p
        state = new_state
        decrease = m_p - m_next
        m_p = m_next
        if decrease / max(1.0, report.objective_trace[-2]) < eps:
            if grad_tol is None or gradient_norm(A1, A2, W, state) <= grad_tol * (1.0 + m_p):
                report.converged = True
                break

    report.gradient_norm = gradient_norm(A1, A2, W, state)
    logger.info(
        f"WLR finished: iterations={report.iterations} objective={m_p:.6g} converged={report.converged}"
    )
    return state, report


def _record_sweep(report: SolveReport, old: FactorState, new: FactorState, W: BlockWeight,
                  m_p: float, m_next: float, p: int) -> None:
    dX1 = old.X1 - new.X1
    weighted = frob_norm_sq(dX1 * W.W1)
    terms = (
        weighted
        + frob_norm_sq(dX1 @ old.C)
        + frob_norm_sq(new.X1 @ (old.C - new.C))
        + frob_norm_sq((old.B - new.B) @ old.D)
        + frob_norm_sq(new.B @ (old.D - new.D))
    )
    decrease = m_p - m_next
    floor = 1e-7 * max(1.0, m_p)
    residual = abs(decrease - terms) / max(abs(decrease), terms, floor)
    report.block_change_sums.append(terms)
    report.decrease_identity_residuals.append(residual)

    slack = MONOTONE_SLACK + 1e-12 * m_p
    bd_change = 0.5 * frob_norm_sq(new.B @ new.D - old.B @ old.D)
    report.background_change_margins.append(decrease - bd_change)
    report.weighted_change_margins.append(decrease - weighted)

    if residual > IDENTITY_RTOL:
        logger.warning(f"iteration {p}: decrease identity residual {residual:.3g} exceeds {IDENTITY_RTOL}")
    if decrease - bd_change < -slack or decrease - weighted < -slack:
        logger.warning(f"iteration {p}: decrease lower bound violated")
