"""Snapshot data model: field layouts, affine scaling, splits, and pipe-flow numbers.

A snapshot matrix stores one column per time step.  Rows are stacked
field-major, component-major, point-minor, and each component block carries
its own affine scaling (offset, factor) so that

    scaled = (raw - offset) / factor        raw = scaled * factor + offset

holds row-wise.  All containers are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import DataError, DimensionError, DomainError

# Pipe flow is conventionally turbulent above this Reynolds number.
TURBULENT_REYNOLDS = 2900.0

# Relative tolerance for the constant time-spacing invariant.
_SPACING_RTOL = 1e-12


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FieldSpec:
    """One named field: ``components`` blocks of ``points`` values each.

    ``scale_offset`` / ``scale_factor`` hold one entry per component block.
    ``synthetic`` marks proxy fields that were derived rather than solved;
    the flag is in-memory metadata only and is not persisted by the binary
    container format.
    """

    name: str
    components: int
    points: int
    scale_offset: tuple[float, ...]
    scale_factor: tuple[float, ...]
    synthetic: bool = False

    def __post_init__(self):
        if not self.name:
            raise DomainError("field name must be non-empty")
        if self.components < 1 or self.points < 1:
            raise DomainError(
                f"field {self.name!r}: components and points must be positive"
            )
        object.__setattr__(self, "scale_offset", tuple(float(v) for v in self.scale_offset))
        object.__setattr__(self, "scale_factor", tuple(float(v) for v in self.scale_factor))
        if len(self.scale_offset) != self.components or len(self.scale_factor) != self.components:
            raise DimensionError(
                f"field {self.name!r}: need one (offset, factor) pair per component block"
            )
        if not all(np.isfinite(self.scale_offset)) or not all(np.isfinite(self.scale_factor)):
            raise DataError(f"field {self.name!r}: scaling entries must be finite")
        if any(f <= 0.0 for f in self.scale_factor):
            raise DomainError(f"field {self.name!r}: scale factors must be strictly positive")

    @property
    def size(self) -> int:
        return self.components * self.points


class ReynoldsNumber(NamedTuple):
    value: float
    turbulent: bool


@dataclass(frozen=True)
class FieldLayout:
    """Ordered field blocks defining the row structure of a snapshot matrix."""

    fields: tuple[FieldSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise DomainError(f"duplicate field names in layout: {names}")
        if self.n_state <= 0:
            raise DimensionError("layout must contain at least one row")

    @property
    def n_state(self) -> int:
        return sum(f.size for f in self.fields)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def __getitem__(self, name: str) -> FieldSpec:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def row_offset(self, name: str) -> int:
        off = 0
        for f in self.fields:
            if f.name == name:
                return off
            off += f.size
        raise KeyError(name)

    def row_slice(self, name: str, component: int | None = None) -> slice:
        """Row range of a field, or of one of its component blocks."""
        f = self[name]
        start = self.row_offset(name)
        if component is None:
            return slice(start, start + f.size)
        if not 0 <= component < f.components:
            raise DimensionError(f"field {name!r} has no component {component}")
        start += component * f.points
        return slice(start, start + f.points)

    def offset_vector(self) -> np.ndarray:
        """Per-row scale offsets, expanded to length n_state."""
        return np.concatenate(
            [np.repeat(f.scale_offset, f.points) for f in self.fields]
        )

    def factor_vector(self) -> np.ndarray:
        """Per-row scale factors, expanded to length n_state."""
        return np.concatenate(
            [np.repeat(f.scale_factor, f.points) for f in self.fields]
        )

    def identity_scaled(self) -> "FieldLayout":
        """Same structure with offsets 0 and factors 1 (values are raw units)."""
        return FieldLayout(
            tuple(
                replace(f, scale_offset=(0.0,) * f.components,
                        scale_factor=(1.0,) * f.components)
                for f in self.fields
            )
        )

    def column_labels(self) -> list[str]:
        """CSV column labels, one per row: ``<field>.<component>.<point>``."""
        labels = []
        for f in self.fields:
            for c in range(f.components):
                labels.extend(f"{f.name}.{c}.{p}" for p in range(f.points))
        return labels


@dataclass(frozen=True)
class SnapshotMatrix:
    """Column-per-time-step matrix of stacked, scaled field values."""

    layout: FieldLayout
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _as_readonly(np.atleast_1d(self.times))
        values = _as_readonly(np.atleast_2d(self.values))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1:
            raise DimensionError("times must be one-dimensional")
        if values.ndim != 2:
            raise DimensionError("values must be a matrix")
        if values.shape[0] != self.layout.n_state:
            raise DimensionError(
                f"values have {values.shape[0]} rows, layout expects {self.layout.n_state}"
            )
        if values.shape[1] != times.size:
            raise DimensionError(
                f"{values.shape[1]} columns vs {times.size} time stamps"
            )
        if times.size >= 2:
            dts = np.diff(times)
            if np.any(dts <= 0.0):
                raise DataError("times must be strictly increasing")
            dt = dts[0]
            if np.max(np.abs(dts - dt)) > _SPACING_RTOL * abs(dt):
                raise DataError("time spacing must be constant to 1e-12 relative")

    @property
    def n_state(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        if self.n_times < 2:
            return 0.0
        return float(self.times[1] - self.times[0])

    @property
    def t0(self) -> float:
        return float(self.times[0]) if self.n_times else 0.0

    def raw_values(self) -> np.ndarray:
        """Values with the layout scaling inverted (physical units)."""
        off = self.layout.offset_vector()
        fac = self.layout.factor_vector()
        return self.values * fac[:, None] + off[:, None]

    def field_values(self, name: str, raw: bool = True) -> np.ndarray:
        """One field as a (components, points, n_times) array."""
        f = self.layout[name]
        block = self.values[self.layout.row_slice(name)]
        out = block.reshape(f.components, f.points, self.n_times)
        if raw:
            off = np.asarray(f.scale_offset)[:, None, None]
            fac = np.asarray(f.scale_factor)[:, None, None]
            out = out * fac + off
        return out


def _normalize_field_array(name: str, arr) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.ndim == 2:
        a = a[None, :, :]
    if a.ndim != 3:
        raise DimensionError(
            f"field {name!r}: expected (points, n_times) or (components, points, n_times)"
        )
    return a


def _block_scaling(block: np.ndarray, policy: str) -> tuple[float, float]:
    """Affine (offset, factor) for one component block under a scaling policy."""
    if policy == "identity":
        return 0.0, 1.0
    if policy == "standardize":
        offset = float(block.mean())
        spread = float(block.std())
        if spread < 1e-14:
            spread = float(np.max(np.abs(block)))
        if spread < 1e-14:
            spread = 1.0
        return offset, spread
    raise DomainError(f"unknown scaling policy {policy!r}")


def assemble_snapshots(
    fields: Mapping[str, np.ndarray],
    times,
    scaling: str | Mapping[str, str] = "identity",
    synthetic: Iterable[str] = (),
) -> SnapshotMatrix:
    """Stack named per-time-step field arrays into a scaled snapshot matrix.

    Parameters
    ----------
    fields : mapping of name -> array
        Raw (unscaled) values, shaped (points, n_times) for scalar fields or
        (components, points, n_times) for vector fields.  Insertion order
        fixes the row order.
    times : 1-D sequence
        Snapshot times, strictly increasing with constant spacing.
    scaling : str or mapping
        Per-field policy, ``"identity"`` or ``"standardize"``.  A bare string
        applies to every field.  Standardization is per component block:
        offset is the block mean, factor its standard deviation, falling back
        to the block max-abs when the deviation is below 1e-14.
    synthetic : iterable of names
        Fields to flag as derived proxies in the layout.
    """
    if not fields:
        raise DimensionError("no fields selected")
    times = np.asarray(times, dtype=float)
    synthetic = set(synthetic)
    specs = []
    blocks = []
    for name, arr in fields.items():
        a = _normalize_field_array(name, arr)
        if not np.all(np.isfinite(a)):
            raise DataError(f"field {name!r} contains non-finite values")
        n_comp, n_pts, n_t = a.shape
        if n_t != times.size:
            raise DimensionError(
                f"field {name!r} has {n_t} time steps, expected {times.size}"
            )
        policy = scaling if isinstance(scaling, str) else scaling.get(name, "identity")
        offsets, factors = [], []
        scaled = np.empty((n_comp * n_pts, n_t))
        for c in range(n_comp):
            off, fac = _block_scaling(a[c], policy)
            offsets.append(off)
            factors.append(fac)
            scaled[c * n_pts:(c + 1) * n_pts] = (a[c] - off) / fac
        specs.append(
            FieldSpec(name, n_comp, n_pts, tuple(offsets), tuple(factors),
                      synthetic=name in synthetic)
        )
        blocks.append(scaled)
    layout = FieldLayout(tuple(specs))
    return SnapshotMatrix(layout, times, np.vstack(blocks))


def disassemble(data: SnapshotMatrix) -> dict[str, np.ndarray]:
    """Invert :func:`assemble_snapshots`: raw (components, points, n_times) arrays."""
    return {name: data.field_values(name, raw=True) for name in data.layout.names}


def to_raw(data: SnapshotMatrix) -> SnapshotMatrix:
    """Equivalent matrix in raw units (identity scaling in the layout)."""
    return SnapshotMatrix(data.layout.identity_scaled(), data.times, data.raw_values())


def rescale(
    data: SnapshotMatrix,
    scaling: str | Mapping[str, str] = "standardize",
    stats_columns: slice | None = None,
) -> SnapshotMatrix:
    """Re-derive the affine scaling of a snapshot matrix.

    Scaling statistics are computed from the raw values restricted to
    ``stats_columns`` (all columns by default) and then applied to every
    column, so e.g. a training window can fix the normalization for the
    whole dataset.
    """
    raw = data.raw_values()
    stats = raw if stats_columns is None else raw[:, stats_columns]
    if stats.shape[1] == 0:
        raise DimensionError("stats_columns selects no columns")
    specs = []
    scaled = np.empty_like(raw)
    for f in data.layout.fields:
        policy = scaling if isinstance(scaling, str) else scaling.get(f.name, "identity")
        offsets, factors = [], []
        for c in range(f.components):
            rows = data.layout.row_slice(f.name, c)
            off, fac = _block_scaling(stats[rows], policy)
            offsets.append(off)
            factors.append(fac)
            scaled[rows] = (raw[rows] - off) / fac
        specs.append(replace(f, scale_offset=tuple(offsets), scale_factor=tuple(factors)))
    return SnapshotMatrix(FieldLayout(tuple(specs)), data.times, scaled)


def select_fields(data: SnapshotMatrix, names: Iterable[str]) -> SnapshotMatrix:
    """Restrict a snapshot matrix to a subset of its fields, in the given order."""
    names = list(names)
    if not names:
        raise DimensionError("no fields selected")
    specs = []
    rows = []
    for name in names:
        try:
            specs.append(data.layout[name])
        except KeyError:
            raise DimensionError(
                f"field {name!r} not in layout {data.layout.names}"
            ) from None
        rows.append(data.values[data.layout.row_slice(name)])
    return SnapshotMatrix(FieldLayout(tuple(specs)), data.times, np.vstack(rows))


def split_sequences(
    data: SnapshotMatrix, ratios: tuple[float, float, float] = (0.5, 0.1, 0.4)
) -> tuple[SnapshotMatrix, SnapshotMatrix, SnapshotMatrix]:
    """Contiguous train/validation/test split along the time axis.

    Boundaries are floor(ratio * n) for train and validation; the remainder
    goes to test.  Times are preserved, so the three pieces concatenate back
    to the original matrix.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise DomainError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-12:
        raise DomainError(f"ratios must sum to 1, got {sum(ratios)}")
    n = data.n_times
    if n < 10:
        raise DimensionError(f"need at least 10 columns to split, got {n}")
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise DimensionError(f"split {n_train}/{n_val}/{n_test} leaves an empty piece")
    pieces = []
    for lo, hi in ((0, n_train), (n_train, n_train + n_val), (n_train + n_val, n)):
        pieces.append(SnapshotMatrix(data.layout, data.times[lo:hi], data.values[:, lo:hi]))
    return tuple(pieces)


@dataclass(frozen=True)
class FluidProperties:
    """Constant-property gas: density [kg/m3], dynamic viscosity [Pa s],
    isothermal sound speed [m/s] closing the pressure law p = a^2 rho."""

    density: float
    dynamic_viscosity: float
    sound_speed: float

    def __post_init__(self):
        for attr in ("density", "dynamic_viscosity", "sound_speed"):
            if not getattr(self, attr) > 0:
                raise DomainError(f"{attr} must be strictly positive")


@dataclass(frozen=True)
class PipeGeometry:
    """Straight pipe: inner diameter and length, both in metres."""

    diameter: float
    length: float

    def __post_init__(self):
        if not self.diameter > 0 or not self.length > 0:
            raise DomainError("diameter and length must be strictly positive")


def reynolds(fluid: FluidProperties, speed: float, geometry: PipeGeometry) -> ReynoldsNumber:
    """Pipe Reynolds number rho*u*D/mu and its turbulence flag (Re > 2900)."""
    if not speed > 0:
        raise DomainError(f"flow speed must be strictly positive, got {speed}")
    value = fluid.density * speed * geometry.diameter / fluid.dynamic_viscosity
    return ReynoldsNumber(value=value, turbulent=value > TURBULENT_REYNOLDS)
