import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from wlr.model import BgParams  # noqa: E402
from wlr.solver import FactorState, objective  # noqa: E402
from wlr.synth import standard_spec, synth_video  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _orthonormal_columns(rng, n, k):
    Q, R = np.linalg.qr(rng.standard_normal((n, k)))
    # Fix the column signs so the factor does not depend on the LAPACK build.
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def spectral_matrix(rng, m, n, singular_values):
    """Random ``m x n`` matrix with the given singular values and random singular vectors."""
    s = np.asarray(singular_values, dtype=float)
    U = _orthonormal_columns(rng, m, len(s))
    V = _orthonormal_columns(rng, n, len(s))
    return (U * s) @ V.T



def altmin_lowrank_oracle(A, r, restarts=100, iters=300, seed=0):
    """Best objective ``||A - U V^T||_F^2`` over ALS runs from random starts (batched over restarts)."""
    rng = np.random.default_rng(seed)
    m, n = A.shape
    V = rng.standard_normal((restarts, n, r))
    for _ in range(iters):
        G = np.swapaxes(V, 1, 2) @ V
        U = np.swapaxes(np.linalg.solve(G, np.swapaxes(A @ V, 1, 2)), 1, 2)
        H = np.swapaxes(U, 1, 2) @ U
        V = np.swapaxes(np.linalg.solve(H, np.swapaxes(A.T @ U, 1, 2)), 1, 2)
    residual = A[None] - U @ np.swapaxes(V, 1, 2)
    return float(np.min(np.sum(residual ** 2, axis=(1, 2))))


def constrained_oracle(A1, A2, r, restarts=200, iters=1500, seed=0):
    """Best ``||A2 - X2||_F^2`` over ``X2 = A1 C + B D`` found by ALS from random ``B``."""
    rng = np.random.default_rng(seed)
    m, k = A1.shape
    q = r - k
    B = rng.standard_normal((restarts, m, q))
    A1s = np.broadcast_to(A1, (restarts, m, k))
    for _ in range(iters):
        basis = np.concatenate([A1s, B], axis=2)
        G = np.swapaxes(basis, 1, 2) @ basis
        coef = np.linalg.solve(G, np.swapaxes(basis, 1, 2) @ A2)
        C, D = coef[:, :k], coef[:, k:]
        R = A2[None] - A1s @ C
        DDt = D @ np.swapaxes(D, 1, 2)
        B = np.swapaxes(np.linalg.solve(DDt, D @ np.swapaxes(R, 1, 2)), 1, 2)
    basis = np.concatenate([A1s, B], axis=2)
    coef = np.linalg.solve(np.swapaxes(basis, 1, 2) @ basis, np.swapaxes(basis, 1, 2) @ A2)
    residual = A2[None] - basis @ coef
    return float(np.min(np.sum(residual ** 2, axis=(1, 2))))


def finite_difference_gradient(A1, A2, W, state, step=1e-6):
    """Central-difference gradient of the WLR objective, block by block."""
    blocks = {"X1": state.X1, "C": state.C, "B": state.B, "D": state.D}
    grads = {}
    for name, value in blocks.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            plus, minus = value.copy(), value.copy()
            plus[idx] += step
            minus[idx] -= step
            f_plus = objective(A1, A2, W, FactorState(**{**blocks, name: plus}))
            f_minus = objective(A1, A2, W, FactorState(**{**blocks, name: minus}))
            grad[idx] = (f_plus - f_minus) / (2 * step)
        grads[name] = grad
    return grads


@pytest.fixture(scope="session")
def standard_video():
    """``(A, true_background, masks)`` for the standard 60-frame scene."""
    return synth_video(standard_spec())


@pytest.fixture
def static_params():
    """Pipeline parameters with no free rank beyond the prior columns."""
    return BgParams(i2=0, ir=0, p=3, seed=0)
