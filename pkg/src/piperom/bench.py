"""Benchmark harness: split, fit, retrain, blocked rollout, scoring, reporting.

The protocol for every state-space method is fixed: fit the POD basis on the
training window only, select the regularizer by rolling candidate models over
the validation window, refit the predictor on train+validation at the chosen
regularizer with the unchanged basis, then forecast the whole test horizon in
blocks and score the pressure rows.  RMSE is reported both in scaled units
and in pascals; per-time-step error curves support degradation analysis.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .baselines import ar_rollout, fit_linear_ar, mean_forecast, persistence_forecast
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    FitFailureError,
    PipeRomError,
)
from .fields import SnapshotMatrix, rescale, select_fields, split_sequences, to_raw
from .opinf import (
    DEFAULT_MODELFORM,
    RegularizationConfig,
    SweepCandidate,
    build_data_matrix,
    estimate_derivatives,
    operators_from_solution,
    rank_candidates,
    rollout,
    solve_tikhonov,
    sweep_regularizers,
)
from .pod import (
    DEFAULT_ENERGY_THRESHOLD,
    DEFAULT_MAX_RANK,
    fit_basis,
    project,
    select_rank,
    truncate,
)
from .solver import InletProfile, SolverConfig, generate_dataset

KNOWN_METHODS = ("opinf", "linear_ar", "persistence", "persistence_full", "mean")

PRESSURE_FIELD = "p"

# A refit whose rollout strays this far beyond the fitting amplitude is
# treated as divergent and the next-best regularizer is tried.  The check
# uses no test data; it only asks the final model for bounded output over
# the horizon it will be asked to predict.
STABILITY_BOUND_FACTOR = 5.0


def rmse(predicted: np.ndarray, truth: np.ndarray, rows=None) -> float:
    """Root mean square of entrywise differences over selected rows."""
    P = np.asarray(predicted, dtype=float)
    T = np.asarray(truth, dtype=float)
    if P.shape != T.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {T.shape}")
    if rows is not None:
        P = P[rows]
        T = T[rows]
    return float(np.sqrt(np.mean((P - T) ** 2)))


def error_curve(predicted: np.ndarray, truth: np.ndarray, rows=None) -> np.ndarray:
    """Column-wise RMSE over selected rows, one entry per time step."""
    P = np.asarray(predicted, dtype=float)
    T = np.asarray(truth, dtype=float)
    if P.shape != T.shape:
        raise DimensionError(f"shape mismatch: {P.shape} vs {T.shape}")
    if rows is not None:
        P = P[rows]
        T = T[rows]
    return np.sqrt(np.mean((P - T) ** 2, axis=0))


def import_external_predictions(path, layout) -> SnapshotMatrix:
    """Load an externally produced raw-unit forecast CSV against a layout.

    The header must match the layout's column labels exactly; the returned
    matrix is in the layout's scaled units so it scores identically to
    internal methods.
    """
    return formats.read_snapshot_csv(path, layout=layout)


@dataclass(frozen=True)
class RankPolicy:
    """Rank selection: fixed rank, or smallest rank hitting the energy
    threshold, capped."""

    threshold: float = DEFAULT_ENERGY_THRESHOLD
    cap: int = DEFAULT_MAX_RANK
    fixed: int | None = None

    def resolve(self, basis) -> int:
        if self.fixed is not None:
            return min(self.fixed, basis.rank)
        return min(select_rank(basis, self.threshold), self.cap, basis.rank)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one benchmark run."""

    solver: SolverConfig | None = None
    inlet: InletProfile | None = None
    data_path: str | None = None
    features: tuple[str, ...] = ("p", "Uz")
    rank: RankPolicy = RankPolicy()
    methods: tuple[str, ...] = KNOWN_METHODS
    reg: RegularizationConfig = RegularizationConfig()
    modelform: str = DEFAULT_MODELFORM
    block: int = 10
    ratios: tuple[float, float, float] = (0.5, 0.1, 0.4)
    seed: int = 0
    external: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.features:
            raise ConfigError("feature selection must be non-empty")
        if PRESSURE_FIELD not in self.features:
            raise ConfigError("feature selection must include the pressure field 'p'")
        if self.block < 1:
            raise ConfigError("block size must be at least 1")
        if not self.methods and not self.external:
            raise ConfigError("method list must be non-empty")
        unknown = [m for m in self.methods if m not in KNOWN_METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; known: {KNOWN_METHODS}")
        if self.data_path is None and (self.solver is None or self.inlet is None):
            raise ConfigError("either a data path or a solver config + inlet is required")

    def describe(self) -> dict:
        """JSON-able echo of the configuration."""
        d: dict = {
            "features": list(self.features),
            "methods": list(self.methods),
            "modelform": self.modelform,
            "block": self.block,
            "ratios": list(self.ratios),
            "seed": self.seed,
            "rank_policy": {
                "threshold": self.rank.threshold,
                "cap": self.rank.cap,
                "fixed": self.rank.fixed,
            },
            "lambda_grid": list(self.reg.grid),
            "external": [list(e) for e in self.external],
        }
        if self.data_path is not None:
            d["data"] = str(self.data_path)
        if self.solver is not None:
            s = self.solver
            d["solver"] = {
                "geometry": {"diameter": s.geometry.diameter, "length": s.geometry.length},
                "fluid": {
                    "density": s.fluid.density,
                    "dynamic_viscosity": s.fluid.dynamic_viscosity,
                    "sound_speed": s.fluid.sound_speed,
                },
                "n_cells": s.n_cells,
                "friction": s.friction,
                "friction_model": s.friction_model,
                "outlet_pressure": s.outlet_pressure,
                "dt_snap": s.dt_snap,
                "n_snapshots": s.n_snapshots,
                "cfl": s.cfl,
                "boundary": s.boundary,
                "seed": s.seed,
            }
        if self.inlet is not None:
            d["inlet"] = {
                "base": self.inlet.base,
                "amplitude": self.inlet.amplitude,
                "period": self.inlet.period,
                "shape": self.inlet.shape,
            }
        return d


@dataclass
class MethodResult:
    name: str
    status: str = "ok"
    rmse_scaled: float | None = None
    rmse_pa: float | None = None
    fit_seconds: float | None = None
    rollout_seconds: float | None = None
    lam: float | None = None
    rank: int | None = None
    error_curve_pa: np.ndarray | None = None
    mean_pressure: np.ndarray | None = None


@dataclass
class Report:
    config_echo: dict
    dataset_fingerprint: str
    basis_fingerprint: str
    rank: int
    energy_captured: float
    split_sizes: tuple[int, int, int]
    test_times: np.ndarray
    truth_mean_pressure: np.ndarray
    results: list[MethodResult] = field(default_factory=list)

    def result(self, name: str) -> MethodResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json_dict(self) -> dict:
        """Deterministic report content (timings deliberately excluded)."""
        methods = {}
        for r in self.results:
            entry: dict = {"status": r.status}
            if r.status == "ok":
                entry.update(
                    rmse_scaled=r.rmse_scaled,
                    rmse_pa=r.rmse_pa,
                    **{"lambda": r.lam},
                    rank=r.rank,
                    error_curve_pa=[float(v) for v in r.error_curve_pa],
                )
            methods[r.name] = entry
        return {
            "schema": "piperom-report-v1",
            "config": self.config_echo,
            "dataset_fingerprint": self.dataset_fingerprint,
            "basis_fingerprint": self.basis_fingerprint,
            "rank": self.rank,
            "energy_captured": self.energy_captured,
            "split": {
                "train": self.split_sizes[0],
                "validation": self.split_sizes[1],
                "test": self.split_sizes[2],
            },
            "test_times": [float(t) for t in self.test_times],
            "truth_mean_pressure": [float(v) for v in self.truth_mean_pressure],
            "methods": methods,
        }

    def json_text(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    def summary_csv_lines(self):
        yield "method,rmse_scaled,rmse_pa,fit_s,rollout_s,lambda,rank"
        for r in self.results:
            if r.status == "ok":
                lam = "" if r.lam is None else f"{r.lam:.6g}"
                rank = "" if r.rank is None else str(r.rank)
                yield (
                    f"{r.name},{r.rmse_scaled:.10g},{r.rmse_pa:.10g},"
                    f"{r.fit_seconds:.6g},{r.rollout_seconds:.6g},{lam},{rank}"
                )
            else:
                yield f"{r.name},,,,,,"

    def plot_csv_lines(self):
        ok = [r for r in self.results if r.status == "ok"]
        yield "t,truth_mean_p," + ",".join(f"{r.name}_mean_p" for r in ok)
        for j, t in enumerate(self.test_times):
            cells = [f"{t:.17g}", f"{self.truth_mean_pressure[j]:.17g}"]
            cells += [f"{r.mean_pressure[j]:.17g}" for r in ok]
            yield ",".join(cells)


def _fingerprint_dataset(raw: SnapshotMatrix) -> str:
    h = hashlib.sha256()
    h.update(",".join(raw.layout.column_labels()).encode())
    h.update(np.ascontiguousarray(raw.times, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(raw.values, dtype="<f8").tobytes())
    return h.hexdigest()


def _fingerprint_basis(basis) -> str:
    return hashlib.sha256(formats.basis_bytes(basis)).hexdigest()


def load_dataset(config: ExperimentConfig) -> SnapshotMatrix:
    """Resolve the dataset source to a raw-unit snapshot matrix."""
    if config.data_path is not None:
        path = Path(config.data_path)
        if formats.sniff_magic(path) == formats.MAGIC_SNAPSHOT:
            data = formats.read_snapshot(path)
        else:
            data = formats.read_snapshot_csv(path)
        return to_raw(data)
    data = generate_dataset(config.solver, config.inlet, fields=tuple(config.features))
    return to_raw(data)


def _stability_bound(fitted_reduced: np.ndarray) -> float:
    return STABILITY_BOUND_FACTOR * max(float(np.max(np.abs(fitted_reduced))), 1.0)


def fit_opinf_refit(
    x_train: np.ndarray,
    x_val: np.ndarray,
    x_trainval: np.ndarray,
    modelform: str,
    reg: RegularizationConfig,
    dt: float,
    block: int,
    horizon: int,
):
    """Select the regularizer on validation, refit on train+val, safeguard stability.

    Candidates are ranked by validation rollout RMSE (ties toward smaller
    regularizer).  The best candidate is refit on the combined window; if
    its rollout over the forecast horizon diverges or exceeds the stability
    bound, the next-ranked candidate is tried.  Returns the accepted
    operators; raises FitFailureError when no candidate survives.
    """
    candidates = sweep_regularizers(
        x_train, x_val, None, modelform, reg, dt, None, block
    )
    r = x_trainval.shape[0]
    D = build_data_matrix(x_trainval, None, modelform)
    R = estimate_derivatives(x_trainval, dt).T
    bound = _stability_bound(x_trainval)
    statuses: dict[float, str] = {}
    for cand in candidates:
        if not np.isfinite(cand.score):
            statuses[cand.lam] = cand.status
            continue
        O = solve_tikhonov(D, R, cand.lam)
        ops = operators_from_solution(O, r, modelform, lam=cand.lam, dt=dt)
        try:
            traj = rollout(ops, x_trainval[:, -1], None, n_steps=horizon, block=block)
        except DivergenceError as exc:
            statuses[cand.lam] = f"refit diverged at step {exc.index}"
            continue
        peak = float(np.max(np.abs(traj)))
        if peak > bound:
            statuses[cand.lam] = f"refit unbounded (peak {peak:.3g} > bound {bound:.3g})"
            continue
        return ops
    lines = ", ".join(f"lam={lam:g}: {msg}" for lam, msg in statuses.items())
    raise FitFailureError(
        f"no regularizer produced a bounded refit rollout ({lines})",
        statuses=statuses,
    )


def fit_linear_ar_refit(
    x_train: np.ndarray,
    x_val: np.ndarray,
    x_trainval: np.ndarray,
    reg: RegularizationConfig,
    dt: float,
    block: int,
    horizon: int,
):
    """Linear AR counterpart of fit_opinf_refit: sweep, refit, safeguard."""
    m_val = x_val.shape[1]
    candidates = []
    for lam in reg.grid:
        model = fit_linear_ar(x_train, lam, dt=dt)
        try:
            pred = ar_rollout(model, x_train[:, -1], m_val, block=block)
        except DivergenceError as exc:
            candidates.append(
                SweepCandidate(lam, np.inf, f"diverged at step {exc.index}", None)
            )
            continue
        score = float(np.sqrt(np.mean((pred - x_val) ** 2)))
        candidates.append(
            SweepCandidate(lam, score, f"validation rmse {score:.6e}", None)
        )
    if all(np.isinf(c.score) for c in candidates):
        raise FitFailureError(
            "every regularizer candidate diverged on validation",
            statuses={c.lam: c.status for c in candidates},
        )
    bound = _stability_bound(x_trainval)
    statuses: dict[float, str] = {}
    for cand in rank_candidates(candidates):
        if not np.isfinite(cand.score):
            statuses[cand.lam] = cand.status
            continue
        model = fit_linear_ar(x_trainval, cand.lam, dt=dt)
        try:
            traj = ar_rollout(model, x_trainval[:, -1], horizon, block=block)
        except DivergenceError as exc:
            statuses[cand.lam] = f"refit diverged at step {exc.index}"
            continue
        peak = float(np.max(np.abs(traj)))
        if peak > bound:
            statuses[cand.lam] = f"refit unbounded (peak {peak:.3g} > bound {bound:.3g})"
            continue
        return model
    lines = ", ".join(f"lam={lam:g}: {msg}" for lam, msg in statuses.items())
    raise FitFailureError(
        f"no regularizer produced a bounded refit rollout ({lines})",
        statuses=statuses,
    )


def run_experiment(config: ExperimentConfig) -> Report:
    """Execute the full benchmark protocol and assemble a report.

    Per-method failures are recorded as error entries; the report is still
    emitted for the surviving methods.
    """
    raw_all = load_dataset(config)
    missing = [f for f in config.features if f not in raw_all.layout.names]
    if missing:
        raise ConfigError(f"dataset lacks requested features {missing}")
    raw = select_fields(raw_all, config.features)
    fingerprint = _fingerprint_dataset(raw)

    n = raw.n_times
    n_train = int(np.floor(config.ratios[0] * n))
    scaled = rescale(raw, "standardize", stats_columns=slice(0, n_train))
    train, val, test = split_sequences(scaled, config.ratios)
    m_test = test.n_times
    dt = scaled.dt

    basis_full = fit_basis(train)
    r = config.rank.resolve(basis_full)
    basis = truncate(basis_full, r)
    layout = scaled.layout
    p_rows = layout.row_slice(PRESSURE_FIELD)
    off = layout.offset_vector()[:, None]
    fac = layout.factor_vector()[:, None]

    trainval = np.hstack([train.values, val.values])
    x_tv = project(basis, trainval)
    truth_scaled = test.values
    truth_raw = test.raw_values()

    report = Report(
        config_echo=config.describe(),
        dataset_fingerprint=fingerprint,
        basis_fingerprint=_fingerprint_basis(basis),
        rank=r,
        energy_captured=basis.energy_captured,
        split_sizes=(train.n_times, val.n_times, m_test),
        test_times=test.times,
        truth_mean_pressure=truth_raw[p_rows].mean(axis=0),
    )

    def score(name, pred_scaled, fit_s, roll_s, lam=None, rank_used=None):
        pred_raw = pred_scaled * fac + off
        report.results.append(
            MethodResult(
                name=name,
                rmse_scaled=rmse(pred_scaled, truth_scaled, rows=p_rows),
                rmse_pa=rmse(pred_raw, truth_raw, rows=p_rows),
                fit_seconds=fit_s,
                rollout_seconds=roll_s,
                lam=lam,
                rank=rank_used,
                error_curve_pa=error_curve(pred_raw, truth_raw, rows=p_rows),
                mean_pressure=pred_raw[p_rows].mean(axis=0),
            )
        )

    for name in config.methods:
        try:
            if name == "opinf":
                tic = time.perf_counter()
                x_train = project(basis, train)
                x_val = project(basis, val)
                ops = fit_opinf_refit(
                    x_train, x_val, x_tv, config.modelform,
                    config.reg, dt, config.block, m_test,
                )
                fit_s = time.perf_counter() - tic
                tic = time.perf_counter()
                traj = rollout(ops, x_tv[:, -1], None, n_steps=m_test, block=config.block)
                roll_s = time.perf_counter() - tic
                pred = basis.mean[:, None] + basis.modes @ traj
                score(name, pred, fit_s, roll_s, lam=ops.lam, rank_used=r)
            elif name == "linear_ar":
                tic = time.perf_counter()
                x_train = project(basis, train)
                x_val = project(basis, val)
                model = fit_linear_ar_refit(
                    x_train, x_val, x_tv, config.reg, dt, config.block, m_test,
                )
                fit_s = time.perf_counter() - tic
                tic = time.perf_counter()
                traj = ar_rollout(model, x_tv[:, -1], m_test, block=config.block)
                roll_s = time.perf_counter() - tic
                pred = basis.mean[:, None] + basis.modes @ traj
                score(name, pred, fit_s, roll_s, lam=model.lam, rank_used=r)
            elif name == "persistence":
                tic = time.perf_counter()
                traj = persistence_forecast(x_tv[:, -1], m_test)
                pred = basis.mean[:, None] + basis.modes @ traj
                roll_s = time.perf_counter() - tic
                score(name, pred, 0.0, roll_s, rank_used=r)
            elif name == "persistence_full":
                tic = time.perf_counter()
                pred = persistence_forecast(trainval[:, -1], m_test)
                roll_s = time.perf_counter() - tic
                score(name, pred, 0.0, roll_s)
            elif name == "mean":
                tic = time.perf_counter()
                pred = mean_forecast(trainval, m_test)
                roll_s = time.perf_counter() - tic
                score(name, pred, 0.0, roll_s)
        except PipeRomError as exc:
            report.results.append(MethodResult(name=name, status=f"error: {exc}"))

    for name, path in config.external:
        try:
            imported = import_external_predictions(path, layout)
            if imported.n_times != m_test:
                raise DimensionError(
                    f"external forecast has {imported.n_times} rows, test window has {m_test}"
                )
            score(name, imported.values, 0.0, 0.0)
        except PipeRomError as exc:
            report.results.append(MethodResult(name=name, status=f"error: {exc}"))

    report.results.sort(key=lambda res: res.name)
    return report


def write_report(report: Report, out_dir) -> dict[str, Path]:
    """Emit the three report artifacts into a directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "summary": out / "report.csv",
        "plot": out / "plot_data.csv",
        "json": out / "report.json",
    }
    formats._atomic_write(
        paths["summary"], ("\n".join(report.summary_csv_lines()) + "\n").encode()
    )
    formats._atomic_write(
        paths["plot"], ("\n".join(report.plot_csv_lines()) + "\n").encode()
    )
    formats._atomic_write(paths["json"], (report.json_text() + "\n").encode())
    return paths
