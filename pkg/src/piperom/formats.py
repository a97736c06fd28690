"""Binary container formats and CSV interchange for datasets and models.

Every container is little-endian with a 4-byte magic:

  SNP1  snapshot matrix     u32 n_rows, n_cols, n_fields; per field u16
                            name-length + UTF-8 name, u32 components, u32
                            points, then one (f64 offset, f64 factor) pair
                            per component block; f64 t0, f64 dt; payload
                            n_rows*n_cols f64, column-major (each time step
                            contiguous).
  POD1  POD basis           u32 n_state, r, n_sigma; f64 sigma[n_sigma];
                            f64 mean[n_state]; f64 modes column-major.
  OPI1  inferred operators  u32 r, q; u8 term bitmask (c=1,A=2,H=4,G=8,B=16);
                            f64 lambda, dt; then c, A, H, G, B each as a u8
                            presence byte + f64 payload, column-major.
  ARM1  linear AR model     u32 r; f64 lambda, dt; A_d and b each as a u8
                            presence byte + f64 payload, column-major.
  PST1  persistence marker  no payload.
  MEN1  mean-state model    u32 n_state; f64 mean[n_state] (scaled units).

Model bundles written by the CLI concatenate SNP1 (layout only, zero
columns), POD1, and one model container in that order.

CSV files carry raw (unscaled) values: header ``t,<field>.<component>.<point>,...``
and one row per time step.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .baselines import LinearARModel
from .errors import FormatError
from .fields import FieldLayout, FieldSpec, SnapshotMatrix
from .opinf import MODEL_TERMS, ReducedOperators, cubic_width, quadratic_width
from .pod import PodBasis

MAGIC_SNAPSHOT = b"SNP1"
MAGIC_BASIS = b"POD1"
MAGIC_OPERATORS = b"OPI1"
MAGIC_LINEAR_AR = b"ARM1"
MAGIC_PERSISTENCE = b"PST1"
MAGIC_MEAN = b"MEN1"

_TERM_BITS = {term: 1 << i for i, term in enumerate(MODEL_TERMS)}


class _Reader:
    """Cursor over a byte string that fails loudly on truncation."""

    def __init__(self, data: bytes, label: str):
        self.data = data
        self.pos = 0
        self.label = label

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"{self.label}: truncated, expected {self.pos + n} bytes "
                f"but file has {len(self.data)}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").copy()

    def done(self) -> bool:
        return self.pos == len(self.data)


def _check_magic(reader: _Reader, magic: bytes):
    got = reader.take(4)
    if got != magic:
        raise FormatError(
            f"{reader.label}: bad magic {got!r}, expected {magic!r}"
        )


def _f64(values: np.ndarray) -> bytes:
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


# Snapshot container ---------------------------------------------------------

def snapshot_bytes(data: SnapshotMatrix) -> bytes:
    parts = [MAGIC_SNAPSHOT]
    parts.append(struct.pack("<III", data.n_state, data.n_times, len(data.layout.fields)))
    for f in data.layout.fields:
        name = f.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<II", f.components, f.points))
        for off, fac in zip(f.scale_offset, f.scale_factor):
            parts.append(struct.pack("<dd", off, fac))
    parts.append(struct.pack("<dd", data.t0, data.dt))
    # column-major: each time step contiguous
    parts.append(_f64(data.values.T.reshape(-1)))
    return b"".join(parts)


def read_snapshot_bytes(blob: bytes, label: str = "snapshot") -> SnapshotMatrix:
    reader = _Reader(blob, label)
    data = _parse_snapshot(reader)
    if not reader.done():
        raise FormatError(f"{label}: {len(blob) - reader.pos} trailing bytes")
    return data


def _parse_snapshot(reader: _Reader) -> SnapshotMatrix:
    _check_magic(reader, MAGIC_SNAPSHOT)
    n_rows, n_cols, n_fields = reader.unpack("III")
    specs = []
    for _ in range(n_fields):
        (name_len,) = reader.unpack("H")
        name = reader.take(name_len).decode("utf-8")
        components, points = reader.unpack("II")
        offsets, factors = [], []
        for _ in range(components):
            off, fac = reader.unpack("dd")
            offsets.append(off)
            factors.append(fac)
        specs.append(FieldSpec(name, components, points, tuple(offsets), tuple(factors)))
    t0, dt = reader.unpack("dd")
    layout = FieldLayout(tuple(specs))
    if layout.n_state != n_rows:
        raise FormatError(
            f"{reader.label}: header says {n_rows} rows but fields sum to {layout.n_state}"
        )
    payload = reader.floats(n_rows * n_cols)
    values = payload.reshape(n_cols, n_rows).T
    times = t0 + dt * np.arange(n_cols)
    return SnapshotMatrix(layout, times, values)


def write_snapshot(path, data: SnapshotMatrix) -> None:
    _atomic_write(path, snapshot_bytes(data))


def read_snapshot(path) -> SnapshotMatrix:
    return read_snapshot_bytes(Path(path).read_bytes(), label=str(path))


# POD basis container --------------------------------------------------------

def basis_bytes(basis: PodBasis) -> bytes:
    parts = [MAGIC_BASIS]
    parts.append(struct.pack("<III", basis.n_state, basis.rank, basis.singular_values.size))
    parts.append(_f64(basis.singular_values))
    parts.append(_f64(basis.mean))
    parts.append(_f64(basis.modes.T.reshape(-1)))  # column-major
    return b"".join(parts)


def _parse_basis(reader: _Reader) -> PodBasis:
    _check_magic(reader, MAGIC_BASIS)
    n_state, rank, n_sigma = reader.unpack("III")
    sigma = reader.floats(n_sigma)
    mean = reader.floats(n_state)
    modes = reader.floats(n_state * rank).reshape(rank, n_state).T
    sq = sigma**2
    total = sq.sum()
    energy = float(sq[:rank].sum() / total) if total > 0 else 1.0
    return PodBasis(mean, modes, sigma, rank, energy)


def write_basis(path, basis: PodBasis) -> None:
    _atomic_write(path, basis_bytes(basis))


def read_basis(path) -> PodBasis:
    reader = _Reader(Path(path).read_bytes(), str(path))
    basis = _parse_basis(reader)
    if not reader.done():
        raise FormatError(f"{path}: trailing bytes")
    return basis


# Operator containers --------------------------------------------------------

def _block(arr: np.ndarray | None) -> bytes:
    if arr is None:
        return struct.pack("<B", 0)
    return struct.pack("<B", 1) + _f64(np.atleast_2d(arr).T.reshape(-1))


def operators_bytes(ops: ReducedOperators) -> bytes:
    mask = sum(_TERM_BITS[t] for t in ops.modelform)
    parts = [
        MAGIC_OPERATORS,
        struct.pack("<II", ops.rank, ops.n_inputs),
        struct.pack("<B", mask),
        struct.pack("<dd", ops.lam, ops.dt),
    ]
    for term in MODEL_TERMS:
        parts.append(_block(getattr(ops, term)))
    return b"".join(parts)


def _parse_operators(reader: _Reader) -> ReducedOperators:
    _check_magic(reader, MAGIC_OPERATORS)
    r, q = reader.unpack("II")
    (mask,) = reader.unpack("B")
    lam, dt = reader.unpack("dd")
    shapes = {
        "c": (r, 1),
        "A": (r, r),
        "H": (r, quadratic_width(r)),
        "G": (r, cubic_width(r)),
        "B": (r, q),
    }
    values: dict[str, np.ndarray | None] = {}
    for term in MODEL_TERMS:
        (present,) = reader.unpack("B")
        if not present:
            values[term] = None
            continue
        rows, cols = shapes[term]
        block = reader.floats(rows * cols).reshape(cols, rows).T
        values[term] = block
    for term in MODEL_TERMS:
        flagged = bool(mask & _TERM_BITS[term])
        if flagged != (values[term] is not None):
            raise FormatError(f"{reader.label}: term {term} flag disagrees with presence byte")
    return ReducedOperators(
        rank=r,
        c=None if values["c"] is None else values["c"][:, 0],
        A=values["A"],
        H=values["H"],
        G=values["G"],
        B=values["B"],
        lam=lam,
        dt=dt,
    )


def write_operators(path, ops: ReducedOperators) -> None:
    _atomic_write(path, operators_bytes(ops))


def read_operators(path) -> ReducedOperators:
    reader = _Reader(Path(path).read_bytes(), str(path))
    ops = _parse_operators(reader)
    if not reader.done():
        raise FormatError(f"{path}: trailing bytes")
    return ops


def linear_ar_bytes(model: LinearARModel) -> bytes:
    parts = [
        MAGIC_LINEAR_AR,
        struct.pack("<I", model.rank),
        struct.pack("<dd", model.lam, model.dt),
        _block(model.A_d),
        _block(model.b[:, None]),
    ]
    return b"".join(parts)


def _parse_linear_ar(reader: _Reader) -> LinearARModel:
    _check_magic(reader, MAGIC_LINEAR_AR)
    (r,) = reader.unpack("I")
    lam, dt = reader.unpack("dd")
    (present,) = reader.unpack("B")
    if not present:
        raise FormatError(f"{reader.label}: transition matrix missing")
    A_d = reader.floats(r * r).reshape(r, r).T
    (present,) = reader.unpack("B")
    if not present:
        raise FormatError(f"{reader.label}: offset vector missing")
    b = reader.floats(r)
    return LinearARModel(rank=r, A_d=A_d, b=b, dt=dt, lam=lam)


def write_linear_ar(path, model: LinearARModel) -> None:
    _atomic_write(path, linear_ar_bytes(model))


def read_linear_ar(path) -> LinearARModel:
    reader = _Reader(Path(path).read_bytes(), str(path))
    model = _parse_linear_ar(reader)
    if not reader.done():
        raise FormatError(f"{path}: trailing bytes")
    return model


# Model bundles --------------------------------------------------------------

def persistence_bytes() -> bytes:
    return MAGIC_PERSISTENCE


def mean_model_bytes(mean_scaled: np.ndarray) -> bytes:
    v = np.asarray(mean_scaled, dtype=float).reshape(-1)
    return MAGIC_MEAN + struct.pack("<I", v.size) + _f64(v)


def bundle_bytes(layout: FieldLayout, basis: PodBasis, model_blob: bytes) -> bytes:
    carrier = SnapshotMatrix(layout, np.empty(0), np.empty((layout.n_state, 0)))
    return snapshot_bytes(carrier) + basis_bytes(basis) + model_blob


def write_bundle(path, layout: FieldLayout, basis: PodBasis, model_blob: bytes) -> None:
    _atomic_write(path, bundle_bytes(layout, basis, model_blob))


def read_bundle(path):
    """Parse a model bundle: (layout, basis, method name, model object or None)."""
    reader = _Reader(Path(path).read_bytes(), str(path))
    layout = _parse_snapshot(reader).layout
    basis = _parse_basis(reader)
    magic = reader.data[reader.pos:reader.pos + 4]
    if magic == MAGIC_OPERATORS:
        model = _parse_operators(reader)
        method = "opinf"
    elif magic == MAGIC_LINEAR_AR:
        model = _parse_linear_ar(reader)
        method = "linear_ar"
    elif magic == MAGIC_PERSISTENCE:
        reader.take(4)
        model = None
        method = "persistence"
    elif magic == MAGIC_MEAN:
        reader.take(4)
        (n,) = reader.unpack("I")
        model = reader.floats(n)
        method = "mean"
    else:
        raise FormatError(f"{path}: unknown model container magic {magic!r}")
    if not reader.done():
        raise FormatError(f"{path}: trailing bytes")
    return layout, basis, method, model


# CSV interchange ------------------------------------------------------------

def snapshot_csv_lines(data: SnapshotMatrix):
    """Raw-unit CSV lines: header then one row per time step."""
    labels = data.layout.column_labels()
    yield "t," + ",".join(labels)
    raw = data.raw_values()
    for j in range(data.n_times):
        row = ",".join(f"{v:.17g}" for v in raw[:, j])
        yield f"{data.times[j]:.17g}," + row


def write_snapshot_csv(path, data: SnapshotMatrix) -> None:
    _atomic_write(path, ("\n".join(snapshot_csv_lines(data)) + "\n").encode())


def _layout_from_labels(labels: list[str]) -> FieldLayout:
    """Reconstruct an identity-scaled layout from CSV column labels."""
    order: list[str] = []
    shape: dict[str, dict[int, int]] = {}
    for lab in labels:
        parts = lab.rsplit(".", 2)
        if len(parts) != 3:
            raise FormatError(f"malformed column label {lab!r}")
        name, comp_s, point_s = parts
        try:
            comp, point = int(comp_s), int(point_s)
        except ValueError:
            raise FormatError(f"malformed column label {lab!r}") from None
        if name not in shape:
            order.append(name)
            shape[name] = {}
        shape[name][comp] = max(shape[name].get(comp, 0), point + 1)
    specs = []
    for name in order:
        comps = shape[name]
        n_comp = max(comps) + 1
        points = comps[0]
        if sorted(comps) != list(range(n_comp)) or any(comps[c] != points for c in comps):
            raise FormatError(f"ragged component/point structure for field {name!r}")
        specs.append(FieldSpec(name, n_comp, points, (0.0,) * n_comp, (1.0,) * n_comp))
    layout = FieldLayout(tuple(specs))
    if layout.column_labels() != labels:
        raise FormatError("column labels are not in field-major, point-minor order")
    return layout


def read_snapshot_csv(path, layout: FieldLayout | None = None) -> SnapshotMatrix:
    """Read a raw-unit CSV.

    With an explicit layout the header must match its labels exactly (the
    first offending column is named) and values are stored in that layout's
    scaled units; otherwise the layout is derived from the header with
    identity scaling.
    """
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty CSV")
    header = lines[0].split(",")
    if header[0] != "t":
        raise FormatError(f"{path}: first column must be 't', got {header[0]!r}")
    labels = header[1:]
    if layout is not None:
        expected = layout.column_labels()
        if len(labels) != len(expected):
            raise FormatError(
                f"{path}: {len(labels)} data columns, layout expects {len(expected)}"
            )
        for got, want in zip(labels, expected):
            if got != want:
                raise FormatError(f"{path}: column {got!r} does not match expected {want!r}")
    else:
        layout = _layout_from_labels(labels)
    n_rows = layout.n_state
    times = np.empty(len(lines) - 1)
    raw = np.empty((n_rows, len(lines) - 1))
    for j, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != n_rows + 1:
            raise FormatError(f"{path}: row {j + 1} has {len(cells)} cells, expected {n_rows + 1}")
        try:
            times[j] = float(cells[0])
            raw[:, j] = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise FormatError(f"{path}: row {j + 1}: {exc}") from None
    off = layout.offset_vector()
    fac = layout.factor_vector()
    scaled = (raw - off[:, None]) / fac[:, None]
    return SnapshotMatrix(layout, times, scaled)


# Helpers ---------------------------------------------------------------------

def iter_containers(blob: bytes, label: str):
    """Parse a file as a sequence of containers, yielding (kind, object)."""
    reader = _Reader(blob, label)
    parsers = {
        MAGIC_SNAPSHOT: ("snapshot", _parse_snapshot),
        MAGIC_BASIS: ("basis", _parse_basis),
        MAGIC_OPERATORS: ("operators", _parse_operators),
        MAGIC_LINEAR_AR: ("linear_ar", _parse_linear_ar),
    }
    while not reader.done():
        magic = reader.data[reader.pos:reader.pos + 4]
        if magic == MAGIC_PERSISTENCE:
            reader.take(4)
            yield "persistence", None
        elif magic == MAGIC_MEAN:
            reader.take(4)
            (n,) = reader.unpack("I")
            yield "mean", reader.floats(n)
        elif magic in parsers:
            kind, parse = parsers[magic]
            yield kind, parse(reader)
        else:
            raise FormatError(f"{label}: unknown container magic {magic!r}")


def _atomic_write(path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def sniff_magic(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read(4)
