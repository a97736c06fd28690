"""Operator inference: polynomial latent dynamics fitted by regularized least squares.

The model is the continuous-time system

    dx/dt = c + A x + H q2(x) + G q3(x) + B u(t)

where q2 and q3 are the compressed (unique-monomial) quadratic and cubic
Kronecker products of the state.  Operators are fitted by Tikhonov-regularized
least squares against finite-difference time derivatives; the regularizer is
chosen by rolling the candidate model across a validation window.  Rollouts
integrate with classical fixed-step RK4, emitting states in fixed-size blocks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DivergenceError,
    DomainError,
    FitFailureError,
)
from .fields import SnapshotMatrix, to_raw
from .pod import PodBasis, project, reconstruct

MODEL_TERMS = "cAHGB"  # canonical order: constant, linear, quadratic, cubic, input
DEFAULT_MODELFORM = "cAH"

# Validation scores within this absolute tolerance of the best are ties,
# resolved toward the smaller regularizer.
_TIE_TOL = 1e-12


def quadratic_width(r: int) -> int:
    return r * (r + 1) // 2


def cubic_width(r: int) -> int:
    return r * (r + 1) * (r + 2) // 6


def kron_compressed(x: np.ndarray) -> np.ndarray:
    """Unique quadratic monomials x_i x_j, i <= j, in lexicographic order.

    Accepts a vector (r,) or matrix (r, m); the monomial axis comes first.
    """
    x = np.asarray(x, dtype=float)
    r = x.shape[0]
    if r < 1:
        raise DimensionError("state dimension must be at least 1")
    i_idx, j_idx = np.triu_indices(r)
    return x[i_idx] * x[j_idx]


def kron_compressed_cubic(x: np.ndarray) -> np.ndarray:
    """Unique cubic monomials x_i x_j x_k, i <= j <= k, lexicographic."""
    x = np.asarray(x, dtype=float)
    r = x.shape[0]
    if r < 1:
        raise DimensionError("state dimension must be at least 1")
    idx = np.array(list(itertools.combinations_with_replacement(range(r), 3)))
    return x[idx[:, 0]] * x[idx[:, 1]] * x[idx[:, 2]]


def duplication_indices(r: int) -> np.ndarray:
    """Map full Kronecker index (i, j) -> compressed index of (min, max).

    ``kron_compressed(x)[duplication_indices(r)]`` equals the full r^2
    product x (x) x.
    """
    pos = {}
    count = 0
    for i in range(r):
        for j in range(i, r):
            pos[(i, j)] = count
            count += 1
    return np.array([pos[min(i, j), max(i, j)] for i in range(r) for j in range(r)])


def expand_kron(compressed: np.ndarray, r: int) -> np.ndarray:
    """Full r^2 Kronecker product recovered from the compressed monomials."""
    return np.asarray(compressed)[duplication_indices(r)]


def estimate_derivatives(reduced: np.ndarray, dt: float) -> np.ndarray:
    """Second-order finite-difference time derivatives, column for column.

    Central differences inside, one-sided three-point stencils at both ends;
    exact for trajectories polynomial in time up to degree two.
    """
    X = np.asarray(reduced, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    m = X.shape[1]
    if m < 3:
        raise DimensionError(f"need at least 3 columns, got {m}")
    if dt <= 0:
        raise DomainError("dt must be positive")
    D = np.empty_like(X)
    D[:, 1:-1] = (X[:, 2:] - X[:, :-2]) / (2.0 * dt)
    D[:, 0] = (-3.0 * X[:, 0] + 4.0 * X[:, 1] - X[:, 2]) / (2.0 * dt)
    D[:, -1] = (3.0 * X[:, -1] - 4.0 * X[:, -2] + X[:, -3]) / (2.0 * dt)
    return D


def _validate_modelform(modelform: str) -> str:
    if not modelform:
        raise ConfigError("modelform must select at least one term")
    bad = set(modelform) - set(MODEL_TERMS)
    if bad or len(set(modelform)) != len(modelform):
        raise ConfigError(
            f"modelform {modelform!r} must be distinct letters from {MODEL_TERMS!r}"
        )
    return "".join(t for t in MODEL_TERMS if t in modelform)


def build_data_matrix(
    reduced: np.ndarray,
    inputs: np.ndarray | None = None,
    modelform: str = DEFAULT_MODELFORM,
) -> np.ndarray:
    """Least-squares data matrix, one row per time step.

    Column blocks follow the canonical term order: ones | state | quadratic
    monomials | cubic monomials | inputs, restricted to the selected terms.
    """
    modelform = _validate_modelform(modelform)
    X = np.asarray(reduced, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    m = X.shape[1]
    if ("B" in modelform) != (inputs is not None):
        raise ConfigError("inputs must be supplied exactly when the B term is selected")
    blocks = []
    if "c" in modelform:
        blocks.append(np.ones((1, m)))
    if "A" in modelform:
        blocks.append(X)
    if "H" in modelform:
        blocks.append(kron_compressed(X))
    if "G" in modelform:
        blocks.append(kron_compressed_cubic(X))
    if "B" in modelform:
        U = np.asarray(inputs, dtype=float)
        if U.ndim == 1:
            U = U[None, :]
        if U.shape[1] != m:
            raise DimensionError(f"inputs have {U.shape[1]} columns, expected {m}")
        blocks.append(U)
    return np.vstack(blocks).T


def solve_tikhonov(D: np.ndarray, R: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ||D O - R||_F^2 + lam^2 ||O||_F^2 through the SVD of D.

    Filter factors sigma/(sigma^2 + lam^2); lam = 0 gives the minimum-norm
    least-squares solution.
    """
    D = np.asarray(D, dtype=float)
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    if D.ndim != 2 or D.shape[0] != R.shape[0]:
        raise DimensionError(f"incompatible shapes {D.shape} and {R.shape}")
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(R))):
        raise DataError("data matrix and targets must be finite")
    if lam < 0:
        raise DomainError("regularizer must be non-negative")
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    if lam == 0.0:
        cutoff = max(D.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        filt = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    else:
        filt = s / (s**2 + lam**2)
    return Vt.T @ (filt[:, None] * (U.T @ R))


@dataclass(frozen=True)
class ReducedOperators:
    """Fitted operators of the latent dynamics plus fit metadata."""

    rank: int
    c: np.ndarray | None
    A: np.ndarray | None
    H: np.ndarray | None
    B: np.ndarray | None = None
    G: np.ndarray | None = None
    lam: float = 0.0
    dt: float = 1.0

    def __post_init__(self):
        r = self.rank
        if r < 1:
            raise DimensionError("rank must be positive")
        if self.dt <= 0:
            raise DomainError("dt must be positive")
        shapes = {
            "c": (r,),
            "A": (r, r),
            "H": (r, quadratic_width(r)),
            "G": (r, cubic_width(r)),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != want:
                raise DimensionError(f"{name} must have shape {want}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"operator {name} has non-finite entries")
        if self.B is not None:
            B = np.asarray(self.B, dtype=float)
            if B.ndim == 1:
                B = B[:, None]
            object.__setattr__(self, "B", B)
            if B.shape[0] != r:
                raise DimensionError(f"B must have {r} rows, got {B.shape}")
            if not np.all(np.isfinite(B)):
                raise DataError("operator B has non-finite entries")

    @property
    def modelform(self) -> str:
        present = {
            "c": self.c is not None,
            "A": self.A is not None,
            "H": self.H is not None,
            "G": self.G is not None,
            "B": self.B is not None,
        }
        return "".join(t for t in MODEL_TERMS if present[t])

    @property
    def n_inputs(self) -> int:
        return 0 if self.B is None else self.B.shape[1]

    def rhs(self, x: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
        """Time derivative of the latent state."""
        out = np.zeros(self.rank)
        if self.c is not None:
            out += self.c
        if self.A is not None:
            out += self.A @ x
        if self.H is not None:
            out += self.H @ kron_compressed(x)
        if self.G is not None:
            out += self.G @ kron_compressed_cubic(x)
        if self.B is not None:
            if u is None:
                raise ConfigError("model has an input operator but no input was given")
            out += self.B @ np.atleast_1d(u)
        return out


def operators_from_solution(
    O: np.ndarray,
    rank: int,
    modelform: str,
    n_inputs: int = 0,
    lam: float = 0.0,
    dt: float = 1.0,
) -> ReducedOperators:
    """Slice a stacked least-squares solution (d x r) into named operators."""
    modelform = _validate_modelform(modelform)
    Ot = np.asarray(O, dtype=float).T
    if Ot.shape[0] != rank:
        raise DimensionError(f"solution has {Ot.shape[0]} columns, expected rank {rank}")
    pos = 0
    parts: dict[str, np.ndarray | None] = {t: None for t in MODEL_TERMS}
    widths = {
        "c": 1,
        "A": rank,
        "H": quadratic_width(rank),
        "G": cubic_width(rank),
        "B": n_inputs,
    }
    for term in MODEL_TERMS:
        if term not in modelform:
            continue
        w = widths[term]
        parts[term] = Ot[:, pos:pos + w]
        pos += w
    if pos != Ot.shape[1]:
        raise DimensionError(f"solution width {Ot.shape[1]} != expected {pos}")
    return ReducedOperators(
        rank=rank,
        c=None if parts["c"] is None else parts["c"][:, 0],
        A=parts["A"],
        H=parts["H"],
        G=parts["G"],
        B=parts["B"],
        lam=lam,
        dt=dt,
    )


@dataclass(frozen=True)
class RegularizationConfig:
    """Candidate regularizers for the validation sweep, sorted ascending."""

    grid: tuple[float, ...] = tuple(np.logspace(-6.0, 3.0, 10))

    def __post_init__(self):
        grid = tuple(float(g) for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise ConfigError("regularizer grid must be non-empty")
        if any(g < 0 for g in grid):
            raise ConfigError("regularizer grid entries must be non-negative")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("regularizer grid must be strictly ascending")


def _as_signal(input_signal):
    """Normalize an input source to a callable of absolute time (or None)."""
    if input_signal is None:
        return None
    if callable(input_signal):
        return input_signal
    times, table = input_signal
    times = np.asarray(times, dtype=float)
    table = np.atleast_2d(np.asarray(table, dtype=float))

    def interp(t: float) -> np.ndarray:
        return np.array([np.interp(t, times, row) for row in table])

    return interp


def rollout(
    ops: ReducedOperators,
    x0: np.ndarray,
    input_signal=None,
    n_steps: int = 1,
    block: int = 10,
    t0: float = 0.0,
) -> np.ndarray:
    """Integrate the latent ODE with fixed-step RK4, emitting blocks of states.

    Each block of ``block`` steps restarts from the previous block's final
    emitted state, so blocked and unblocked rollouts are identical.  Input
    signals are evaluated at the RK4 substep times (tabulated signals are
    interpolated linearly).
    """
    if n_steps < 1:
        raise DimensionError("n_steps must be at least 1")
    if block < 1:
        raise DomainError("block size must be at least 1")
    x = np.array(x0, dtype=float).reshape(ops.rank)
    dt = ops.dt
    u = _as_signal(input_signal)
    if ops.B is not None and u is None:
        raise ConfigError("model has an input operator but no input signal was given")
    out = np.empty((ops.rank, n_steps))
    for start in range(0, n_steps, block):
        stop = min(start + block, n_steps)
        for j in range(start, stop):
            t = t0 + j * dt
            if u is None:
                k1 = ops.rhs(x)
                k2 = ops.rhs(x + 0.5 * dt * k1)
                k3 = ops.rhs(x + 0.5 * dt * k2)
                k4 = ops.rhs(x + dt * k3)
            else:
                u_half = u(t + 0.5 * dt)
                k1 = ops.rhs(x, u(t))
                k2 = ops.rhs(x + 0.5 * dt * k1, u_half)
                k3 = ops.rhs(x + 0.5 * dt * k2, u_half)
                k4 = ops.rhs(x + dt * k3, u(t + dt))
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"rollout diverged at step {j}", index=j)
            out[:, j] = x
    return out


def _reduced_rmse(pred: np.ndarray, truth: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


@dataclass(frozen=True)
class SweepCandidate:
    """One regularizer candidate after the validation sweep."""

    lam: float
    score: float           # validation RMSE in reduced coordinates; inf if divergent
    status: str
    ops: ReducedOperators | None


def rank_candidates(candidates: list[SweepCandidate]) -> list[SweepCandidate]:
    """Order candidates best-first; score ties within 1e-12 prefer smaller lam."""
    ordered = sorted(candidates, key=lambda c: (c.score, c.lam))
    ranked: list[SweepCandidate] = []
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].score <= ordered[i].score + _TIE_TOL:
            j += 1
        ranked.extend(sorted(ordered[i:j], key=lambda c: c.lam))
        i = j
    return ranked


def sweep_regularizers(
    train_reduced: np.ndarray,
    val_reduced: np.ndarray,
    inputs: np.ndarray | None = None,
    modelform: str = DEFAULT_MODELFORM,
    reg: RegularizationConfig | None = None,
    dt: float = 1.0,
    derivatives: np.ndarray | None = None,
    block: int = 10,
) -> list[SweepCandidate]:
    """Score every candidate regularizer by a validation rollout.

    For each grid entry the least-squares problem is solved on the training
    columns and the model rolled across the validation window from the last
    training state; the score is the validation RMSE in reduced coordinates.
    Divergent rollouts score +inf.  Candidates come back best-first with
    ties resolved toward the smaller regularizer; if every candidate
    diverged a FitFailureError reports the per-candidate status.

    ``inputs``, when given, must span train followed by validation columns.
    ``derivatives`` overrides the finite-difference estimate (for exactly
    known time derivatives).
    """
    modelform = _validate_modelform(modelform)
    reg = reg or RegularizationConfig()
    X = np.atleast_2d(np.asarray(train_reduced, dtype=float))
    V = np.atleast_2d(np.asarray(val_reduced, dtype=float))
    r, m_train = X.shape
    m_val = V.shape[1]
    if m_train < 3:
        raise DimensionError("need at least 3 training columns")
    if m_val < 1:
        raise DimensionError("need at least 1 validation column")

    n_inputs = 0
    train_inputs = None
    val_signal = None
    if inputs is not None:
        U = np.atleast_2d(np.asarray(inputs, dtype=float))
        if U.shape[1] != m_train + m_val:
            raise DimensionError(
                f"inputs must span train+validation ({m_train + m_val} columns), "
                f"got {U.shape[1]}"
            )
        n_inputs = U.shape[0]
        train_inputs = U[:, :m_train]
        table_times = dt * np.arange(m_train + m_val)
        val_signal = (table_times, U)

    D = build_data_matrix(X, train_inputs, modelform)
    R = (derivatives if derivatives is not None else estimate_derivatives(X, dt)).T

    x_last = X[:, -1]
    t_last = dt * (m_train - 1)
    candidates = []
    for lam in reg.grid:
        O = solve_tikhonov(D, R, lam)
        ops = operators_from_solution(O, r, modelform, n_inputs, lam=lam, dt=dt)
        try:
            pred = rollout(ops, x_last, val_signal, n_steps=m_val, block=block, t0=t_last)
        except DivergenceError as exc:
            candidates.append(
                SweepCandidate(lam, np.inf, f"diverged at step {exc.index}", ops)
            )
            continue
        score = _reduced_rmse(pred, V)
        candidates.append(
            SweepCandidate(lam, score, f"validation rmse {score:.6e}", ops)
        )
    if all(np.isinf(c.score) for c in candidates):
        lines = ", ".join(f"lam={c.lam:g}: {c.status}" for c in candidates)
        raise FitFailureError(
            f"every regularizer candidate diverged on validation ({lines})",
            statuses={c.lam: c.status for c in candidates},
        )
    return rank_candidates(candidates)


def fit_opinf(
    train_reduced: np.ndarray,
    val_reduced: np.ndarray,
    inputs: np.ndarray | None = None,
    modelform: str = DEFAULT_MODELFORM,
    reg: RegularizationConfig | None = None,
    dt: float = 1.0,
    derivatives: np.ndarray | None = None,
    block: int = 10,
) -> ReducedOperators:
    """Fit operators on the training window at the best-scoring regularizer.

    See :func:`sweep_regularizers` for the selection protocol.
    """
    candidates = sweep_regularizers(
        train_reduced, val_reduced, inputs, modelform, reg, dt, derivatives, block
    )
    return candidates[0].ops


def forecast_full(
    ops: ReducedOperators,
    basis: PodBasis,
    history: SnapshotMatrix,
    n_steps: int,
    input_signal=None,
    block: int = 10,
) -> SnapshotMatrix:
    """Roll the latent model forward from the end of a snapshot history.

    Projects the final history column, integrates ``n_steps`` ahead, lifts
    back to the full state space, and inverts the layout scaling, returning
    a raw-unit snapshot matrix aligned after the history's last time stamp.
    """
    if history.n_times < 1:
        raise DimensionError("history must contain at least one column")
    if n_steps < 0:
        raise DimensionError("n_steps must be non-negative")
    t_last = float(history.times[-1])
    times = t_last + ops.dt * (np.arange(n_steps) + 1.0)
    if n_steps == 0:
        raw_layout = (basis.layout or history.layout).identity_scaled()
        return SnapshotMatrix(raw_layout, times, np.empty((history.n_state, 0)))
    x0 = project(basis, history.values[:, -1])[:, 0]
    traj = rollout(ops, x0, input_signal, n_steps=n_steps, block=block, t0=t_last)
    scaled = reconstruct(basis, traj, times=times)
    return to_raw(scaled)
