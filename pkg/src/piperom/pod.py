"""Proper orthogonal decomposition of snapshot matrices.

Mean-centered economy SVD with a deterministic sign convention, energy-based
rank selection, projection/reconstruction, and principal angles between two
bases as a train-vs-test distribution-shift check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateDataError, DimensionError, DomainError
from .fields import FieldLayout, FieldSpec, SnapshotMatrix

# Default rank policy for the benchmark pipeline: smallest rank capturing
# this energy fraction, capped at DEFAULT_MAX_RANK modes.
DEFAULT_ENERGY_THRESHOLD = 0.9982
DEFAULT_MAX_RANK = 30

_ORTHO_TOL = 1e-10


def _values_of(data) -> np.ndarray:
    if isinstance(data, SnapshotMatrix):
        return data.values
    return np.asarray(data, dtype=float)


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal modes of a mean-centered snapshot matrix.

    ``singular_values`` keeps the full spectrum of the decomposition even
    when ``modes`` is truncated to ``rank`` columns, so energy bookkeeping
    stays exact under truncation.  ``layout`` remembers the snapshot layout
    of the fitting data when available.
    """

    mean: np.ndarray
    modes: np.ndarray
    singular_values: np.ndarray
    rank: int
    energy_captured: float
    layout: FieldLayout | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        modes = np.asarray(self.modes, dtype=float)
        sv = np.asarray(self.singular_values, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "singular_values", sv)
        if modes.ndim != 2 or modes.shape != (mean.size, self.rank):
            raise DimensionError(
                f"modes must be ({mean.size}, {self.rank}), got {modes.shape}"
            )
        if self.rank < 1:
            raise DimensionError("rank must be positive")
        if np.any(sv < 0) or np.any(np.diff(sv) > 1e-12 * (sv[0] if sv.size else 1.0)):
            raise DataError("singular values must be non-negative and non-increasing")
        gram = modes.T @ modes
        dev = np.max(np.abs(gram - np.eye(self.rank)))
        if dev > _ORTHO_TOL:
            raise DataError(f"modes not orthonormal: max deviation {dev:.2e}")

    @property
    def n_state(self) -> int:
        return self.mean.size

    def energy_at(self, r: int) -> float:
        """Cumulative energy fraction of the leading r singular values."""
        sq = self.singular_values**2
        total = sq.sum()
        if total == 0:
            return 1.0
        return float(sq[: max(r, 0)].sum() / total)


def fit_basis(train) -> PodBasis:
    """Fit a POD basis at maximal (numerical) rank.

    The mean column is subtracted, an economy SVD taken, and each mode's
    sign fixed so its largest-magnitude entry is positive, which makes the
    fit deterministic.
    """
    X = _values_of(train)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DimensionError("need a matrix with at least 2 columns")
    if not np.all(np.isfinite(X)):
        raise DataError("snapshot values must be finite")
    mean = X.mean(axis=1)
    centered = X - mean[:, None]
    U, s, _ = np.linalg.svd(centered, full_matrices=False)
    cutoff = max(centered.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    if rank == 0:
        raise DegenerateDataError("all snapshots identical: nothing to decompose")
    modes = U[:, :rank].copy()
    for j in range(rank):
        lead = np.argmax(np.abs(modes[:, j]))
        if modes[lead, j] < 0:
            modes[:, j] = -modes[:, j]
    sq = s**2
    energy = float(sq[:rank].sum() / sq.sum())
    layout = train.layout if isinstance(train, SnapshotMatrix) else None
    return PodBasis(mean, modes, s, rank, energy, layout=layout)


def select_rank(basis: PodBasis, threshold: float) -> int:
    """Minimal r whose cumulative energy fraction reaches the threshold."""
    if not 0.0 < threshold < 1.0:
        raise DomainError(f"threshold must be in (0, 1), got {threshold}")
    sq = basis.singular_values**2
    frac = np.cumsum(sq) / sq.sum()
    return int(np.searchsorted(frac, threshold - 1e-15) + 1)


def truncate(basis: PodBasis, r: int) -> PodBasis:
    """Keep the leading r modes; the stored spectrum stays complete."""
    if not 1 <= r <= basis.rank:
        raise DimensionError(f"rank {r} not in [1, {basis.rank}]")
    return PodBasis(
        basis.mean,
        basis.modes[:, :r],
        basis.singular_values,
        r,
        basis.energy_at(r),
        layout=basis.layout,
    )


def project(basis: PodBasis, data) -> np.ndarray:
    """Reduced coordinates modes^T (columns - mean), shape (rank, n_times)."""
    X = _values_of(data)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != basis.n_state:
        raise DimensionError(f"{X.shape[0]} rows vs basis n_state {basis.n_state}")
    return basis.modes.T @ (X - basis.mean[:, None])


def _fallback_layout(n_state: int) -> FieldLayout:
    return FieldLayout((FieldSpec("state", 1, n_state, (0.0,), (1.0,)),))


def reconstruct(basis: PodBasis, reduced: np.ndarray, times=None) -> SnapshotMatrix:
    """Lift reduced coordinates back to the full state space.

    Returns a snapshot matrix carrying the layout of the fitting data (a
    single anonymous field if the basis has none).  Values are in the same
    scaled units the basis was fitted on.
    """
    reduced = np.asarray(reduced, dtype=float)
    if reduced.ndim == 1:
        reduced = reduced[:, None]
    if reduced.shape[0] != basis.rank:
        raise DimensionError(f"{reduced.shape[0]} rows vs basis rank {basis.rank}")
    values = basis.mean[:, None] + basis.modes @ reduced
    if times is None:
        times = np.arange(reduced.shape[1], dtype=float)
    layout = basis.layout if basis.layout is not None else _fallback_layout(basis.n_state)
    return SnapshotMatrix(layout, times, values)


def subspace_shift(basis_a: PodBasis, basis_b: PodBasis) -> np.ndarray:
    """Principal angles (degrees, non-decreasing) between two equal-rank bases."""
    if basis_a.n_state != basis_b.n_state:
        raise DimensionError("bases live in different state spaces")
    if basis_a.rank != basis_b.rank:
        raise DimensionError(
            f"rank mismatch: {basis_a.rank} vs {basis_b.rank}"
        )
    overlap = basis_a.modes.T @ basis_b.modes
    cosines = np.linalg.svd(overlap, compute_uv=False)
    return np.degrees(np.arccos(np.clip(cosines, 0.0, 1.0)))
