"""Classical reference forecasters: persistence, climatology mean, linear AR.

Non-neural controls for the rollout benchmark.  The linear autoregressive
model is the discrete-time counterpart of the inferred linear operator and
shares the Tikhonov solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, DivergenceError, DomainError
from .fields import SnapshotMatrix
from .opinf import solve_tikhonov


def persistence_forecast(last_state: np.ndarray, n_steps: int) -> np.ndarray:
    """Repeat the last observed state for n_steps columns."""
    if n_steps < 1:
        raise DimensionError("n_steps must be at least 1")
    v = np.asarray(last_state, dtype=float).reshape(-1)
    return np.tile(v[:, None], (1, n_steps))


def mean_forecast(train, n_steps: int) -> np.ndarray:
    """Repeat the training column mean for n_steps columns."""
    if n_steps < 1:
        raise DimensionError("n_steps must be at least 1")
    X = train.values if isinstance(train, SnapshotMatrix) else np.asarray(train, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise DimensionError("training data must be a non-empty matrix")
    return np.tile(X.mean(axis=1)[:, None], (1, n_steps))


@dataclass(frozen=True)
class LinearARModel:
    """One-step map x_{k+1} = A_d x_k + b in reduced coordinates."""

    rank: int
    A_d: np.ndarray
    b: np.ndarray
    dt: float
    lam: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.A_d, dtype=float)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        object.__setattr__(self, "A_d", A)
        object.__setattr__(self, "b", b)
        if A.shape != (self.rank, self.rank) or b.shape != (self.rank,):
            raise DimensionError(
                f"expected A_d ({self.rank},{self.rank}) and b ({self.rank},), "
                f"got {A.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise DataError("model entries must be finite")
        if self.dt <= 0:
            raise DomainError("dt must be positive")


def fit_linear_ar(train_reduced: np.ndarray, lam: float, dt: float = 1.0) -> LinearARModel:
    """Ridge regression of successive states: minimizes
    sum_k ||A_d x_k + b - x_{k+1}||^2 + lam^2 (||A_d||_F^2 + ||b||^2)."""
    X = np.atleast_2d(np.asarray(train_reduced, dtype=float))
    r, m = X.shape
    if m < 2:
        raise DimensionError("need at least 2 columns to fit a one-step map")
    D = np.vstack([np.ones(m - 1), X[:, :-1]]).T
    R = X[:, 1:].T
    O = solve_tikhonov(D, R, lam)
    return LinearARModel(rank=r, A_d=O[1:].T, b=O[0], dt=dt, lam=lam)


def ar_rollout(
    model: LinearARModel,
    x0: np.ndarray,
    n_steps: int,
    block: int = 10,
) -> np.ndarray:
    """Iterate the one-step map, emitting states in fixed-size blocks.

    Blocked emission restarts each block from the previous block's final
    state and is exactly equal to the unblocked iteration.
    """
    if n_steps < 1:
        raise DimensionError("n_steps must be at least 1")
    if block < 1:
        raise DomainError("block size must be at least 1")
    x = np.array(x0, dtype=float).reshape(model.rank)
    out = np.empty((model.rank, n_steps))
    for start in range(0, n_steps, block):
        stop = min(start + block, n_steps)
        for j in range(start, stop):
            x = model.A_d @ x + model.b
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"rollout diverged at step {j}", index=j)
            out[:, j] = x
    return out
