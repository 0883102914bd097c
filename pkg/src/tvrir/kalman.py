"""Kalman recursion over trajectory locations and the four compared variants.

Variants:

``LI-A``      prediction only with the analytical matrix, ``h(l) = A^l h(0)``
``KF-alpha``  full recursion with scalar transition ``alpha`` (identity)
``KF-A``      full recursion with the analytical matrix
``KF-A_dtw``  full recursion with the DTW-estimated matrix
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy import sparse

from .errors import DegenerateGainError
from .transition import TransitionMatrix

ALGORITHMS = ("LI-A", "KF-alpha", "KF-A", "KF-A_dtw")
PROCESS_NOISE_DB = -30.0
P0_SCALE = 1e-6


@dataclass
class KalmanConfig:
    Q_scale: float = 10 ** (PROCESS_NOISE_DB / 10)
    R: float = 0.0
    P0_scale: float = P0_SCALE
    alpha: float = 1.0

    def __post_init__(self):
        if self.Q_scale < 0 or self.R < 0 or self.P0_scale < 0:
            raise ValueError("Q_scale, R and P0_scale must be non-negative")


@dataclass
class KalmanState:
    h_hat: np.ndarray
    P: np.ndarray
    l: int = 0


def init(h0, P0_scale: float = P0_SCALE) -> KalmanState:
    h0 = np.array(getattr(h0, "samples", h0), dtype=float)
    return KalmanState(h0, P0_scale * np.eye(h0.size), 0)


class _RowSparse:
    """Sparse transition restricted to its non-empty rows."""

    def __init__(self, A: sparse.csr_matrix):
        self.full = A
        self.rows = np.flatnonzero(A.getnnz(axis=1))
        self.sub = A[self.rows]
        self.shape = A.shape

    def __matmul__(self, v):
        return self.full @ v

    def propagate_cov(self, P: np.ndarray) -> np.ndarray:
        # A P A^T vanishes outside the active rows/columns; P is symmetric
        AP = self.sub @ P
        out = np.zeros_like(P)
        out[np.ix_(self.rows, self.rows)] = self.sub @ np.ascontiguousarray(AP.T)
        return out


def _as_operator(A):
    """Normalize a transition to a scalar, row-restricted sparse matrix or dense array."""
    if isinstance(A, (float, int, np.floating, np.integer)):
        return float(A)
    if isinstance(A, _RowSparse):
        return A
    if isinstance(A, TransitionMatrix):
        return _RowSparse(A.to_sparse())
    if sparse.issparse(A):
        return _RowSparse(A.tocsr())
    return np.asarray(A, dtype=float)


def predict(state: KalmanState, A, Q) -> KalmanState:
    """Prior ``A h``, ``A P A^T + Q``; ``A`` may be a scalar, array or sparse matrix.

    ``Q`` is either a full matrix or a scalar variance applied to the diagonal.
    """
    A = _as_operator(A)
    if isinstance(A, float):
        h = A * state.h_hat
        P = (A * A) * state.P
    elif isinstance(A, _RowSparse):
        h = A @ state.h_hat
        P = A.propagate_cov(state.P)
    else:
        h = A @ state.h_hat
        P = A @ state.P @ A.T
    if np.isscalar(Q):
        P[np.diag_indices_from(P)] += Q
    else:
        P = P + Q
    return KalmanState(h, P, state.l + 1)


def update(prior: KalmanState, x, y: float, R: float) -> KalmanState:
    """Posterior after one scalar observation ``y = x^T h + v``."""
    x = np.asarray(x, dtype=float)
    Px = prior.P @ x
    s = float(x @ Px) + R
    if not np.any(x) and R == 0:
        return KalmanState(prior.h_hat.copy(), prior.P.copy(), prior.l)
    if s == 0:
        raise DegenerateGainError("innovation variance x^T P x + R is zero")
    h = prior.h_hat + Px * ((y - float(x @ prior.h_hat)) / s)
    # (I - k x^T) P == P - P x (P x)^T / s for symmetric P
    P = prior.P - np.outer(Px, Px / s)
    P += P.T
    P *= 0.5
    return KalmanState(h, P, prior.l)


def iterate(h0, transition, observations, regressors, config: KalmanConfig,
            predict_only: bool = False) -> Iterator[KalmanState]:
    """Yield the posterior state for ``l = 0..L-1``.

    ``observations`` has length ``L``; ``regressors`` is ``(L, N)`` or a
    callable ``l -> x_vec``. Entry ``l = 0`` is not used: the filter starts
    from the known ``h0``.
    """
    op = _as_operator(transition)
    state = init(h0, config.P0_scale)
    yield state
    L = len(observations)
    get_x: Callable[[int], np.ndarray] = regressors if callable(regressors) else regressors.__getitem__
    for l in range(1, L):
        if predict_only:
            # posterior == prior; covariance is never needed
            h = op * state.h_hat if isinstance(op, float) else op @ state.h_hat
            state = KalmanState(h, state.P, l)
        else:
            state = update(predict(state, op, config.Q_scale), get_x(l), observations[l], config.R)
        yield state


def run_filter(variant: str, A, observations, regressors, config: KalmanConfig, h0,
               on_state: Callable[[KalmanState], None] | None = None) -> list[np.ndarray] | None:
    """Run one variant; return all ``h_hat+(l)`` or stream them to ``on_state``.

    For ``KF-alpha`` the matrix argument is ignored and ``config.alpha`` is used.
    """
    if variant not in ALGORITHMS:
        raise ValueError(f"unknown variant {variant!r}; choose from {ALGORITHMS}")
    h0 = np.asarray(getattr(h0, "samples", h0), dtype=float)
    N = h0.size
    if not callable(regressors):
        regressors = np.asarray(regressors, dtype=float)
        if regressors.shape != (len(observations), N):
            raise ValueError(f"regressors must be {(len(observations), N)}, got {regressors.shape}")
    transition = config.alpha if variant == "KF-alpha" else A
    if not np.isscalar(transition) and getattr(transition, "shape", (N, N)) != (N, N):
        raise ValueError(f"transition must be {N}x{N}")
    states = iterate(h0, transition, observations, regressors, config,
                     predict_only=(variant == "LI-A"))
    if on_state is not None:
        for s in states:
            on_state(s)
        return None
    return [s.h_hat for s in states]
