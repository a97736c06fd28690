"""Command-line front end: datagen, fit, predict, bench, inspect.

Every subcommand is driven by one JSON config file (see config.py) plus
repeatable ``--override key=value`` pairs.  Exit codes are a stable
scripting contract: 0 success, 2 config/schema fault, 3 solver divergence,
4 fit failure, 5 rollout divergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import config as config_mod
from . import formats
from .baselines import ar_rollout, fit_linear_ar, mean_forecast, persistence_forecast
from .errors import (
    ConfigError,
    DivergenceError,
    FitFailureError,
    FormatError,
    PipeRomError,
    StabilityError,
)
from .fields import SnapshotMatrix, rescale, reynolds, select_fields, split_sequences, to_raw
from .opinf import forecast_full
from .pod import fit_basis, project, reconstruct, truncate
from .solver import generate_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_FIT = 4
EXIT_ROLLOUT = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piperom",
        description="Reduced-order emulation of transient pipeline gas pressure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=False, data=False, model=False, steps=False, fmt=False):
        p.add_argument("--config", help="JSON config file (defaults used if omitted)")
        p.add_argument(
            "--override", action="append", default=[], metavar="KEY=VALUE",
            help="override a config entry (repeatable, dotted keys)",
        )
        if out:
            p.add_argument("--out", required=True, help="output path")
        if data:
            p.add_argument("--data", required=True, help="snapshot file (SNP1 or CSV)")
        if model:
            p.add_argument("--model", required=True, help="model bundle file")
        if steps:
            p.add_argument("--steps", type=int, required=True, help="forecast steps")
        if fmt:
            p.add_argument(
                "--format", choices=("snp1", "csv"), default="snp1",
                help="output container format",
            )

    common(sub.add_parser("datagen", help="run the surrogate solver"), out=True, fmt=True)
    common(sub.add_parser("fit", help="fit a model bundle"), out=True, data=True)
    p_predict = sub.add_parser("predict", help="forecast from a model bundle")
    common(p_predict, out=True, data=True, model=True, steps=True)
    common(sub.add_parser("bench", help="run the benchmark suite"), out=True)
    p_inspect = sub.add_parser("inspect", help="describe a container file")
    p_inspect.add_argument("path", help="file to inspect")
    return parser


def _load_config(args) -> dict:
    cfg = config_mod.load_config(getattr(args, "config", None))
    return config_mod.apply_overrides(cfg, getattr(args, "override", []))


def _read_history(path) -> SnapshotMatrix:
    if formats.sniff_magic(path) == formats.MAGIC_SNAPSHOT:
        return formats.read_snapshot(path)
    return formats.read_snapshot_csv(path)


def cmd_datagen(args) -> int:
    cfg = _load_config(args)
    solver, inlet = config_mod.build_solver(cfg)
    features = config_mod.normalize_features(cfg["features"])
    data = generate_dataset(solver, inlet, fields=features, scaling="identity")
    if args.format == "csv":
        formats.write_snapshot_csv(args.out, data)
    else:
        formats.write_snapshot(args.out, data)
    re = reynolds(solver.fluid, inlet.base, solver.geometry)
    duration = data.times[-1] - data.times[0] + data.dt
    print(f"wrote {args.out}: {data.n_state} rows x {data.n_times} columns")
    print(f"duration {duration:.6g} s at dt_snap {solver.dt_snap:.6g} s")
    print(
        f"mean-inlet Reynolds number {re.value:.2f} "
        f"({'turbulent' if re.turbulent else 'laminar'})"
    )
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    features = config_mod.normalize_features(cfg["features"])
    experiment = config_mod.build_experiment(cfg, data_path=args.data)
    method = experiment.methods[0]

    raw = to_raw(_read_history(args.data))
    missing = [f for f in features if f not in raw.layout.names]
    if missing:
        raise ConfigError(f"data file lacks features {missing}")
    raw = select_fields(raw, features)
    n_train = int(np.floor(experiment.ratios[0] * raw.n_times))
    scaled = rescale(raw, "standardize", stats_columns=slice(0, n_train))
    train, val, test = split_sequences(scaled, experiment.ratios)
    dt = scaled.dt
    horizon = test.n_times

    full_basis = fit_basis(train)
    basis = truncate(full_basis, experiment.rank.resolve(full_basis))
    trainval = np.hstack([train.values, val.values])
    x_tv = project(basis, trainval)

    if method == "opinf":
        ops = bench_mod.fit_opinf_refit(
            project(basis, train), project(basis, val), x_tv,
            experiment.modelform, experiment.reg, dt, experiment.block, horizon,
        )
        blob = formats.operators_bytes(ops)
        detail = f"lambda={ops.lam:.6g}"
    elif method == "linear_ar":
        model = bench_mod.fit_linear_ar_refit(
            project(basis, train), project(basis, val), x_tv,
            experiment.reg, dt, experiment.block, horizon,
        )
        blob = formats.linear_ar_bytes(model)
        detail = f"lambda={model.lam:.6g}"
    elif method == "persistence":
        blob = formats.persistence_bytes()
        detail = "no coefficients"
    elif method == "mean":
        blob = formats.mean_model_bytes(trainval.mean(axis=1))
        detail = "no coefficients"
    else:
        raise ConfigError(f"fit does not support method {method!r}")

    formats.write_bundle(args.out, scaled.layout, basis, blob)
    print(f"wrote {args.out}: method={method} rank={basis.rank} {detail}")
    return EXIT_OK


def cmd_predict(args) -> int:
    if args.steps < 0:
        raise ConfigError("--steps must be non-negative")
    layout, basis, method, model = formats.read_bundle(args.model)
    basis = replace(basis, layout=layout)

    raw = to_raw(_read_history(args.data))
    missing = [f for f in layout.names if f not in raw.layout.names]
    if missing:
        raise ConfigError(f"data file lacks model features {missing}")
    raw = select_fields(raw, layout.names)
    off = layout.offset_vector()[:, None]
    fac = layout.factor_vector()[:, None]
    history = SnapshotMatrix(layout, raw.times, (raw.raw_values() - off) / fac)

    model_dt = getattr(model, "dt", None) or history.dt
    if model_dt <= 0:
        raise ConfigError("cannot infer the forecast time step from model or data")
    t_last = float(history.times[-1])
    times = t_last + model_dt * (np.arange(args.steps) + 1.0)

    tic = time.perf_counter()
    if args.steps == 0:
        forecast = SnapshotMatrix(
            layout.identity_scaled(), times, np.empty((layout.n_state, 0))
        )
    elif method == "opinf":
        forecast = forecast_full(model, basis, history, args.steps)
    elif method == "linear_ar":
        x0 = project(basis, history.values[:, -1])[:, 0]
        traj = ar_rollout(model, x0, args.steps)
        forecast = to_raw(reconstruct(basis, traj, times=times))
    elif method == "persistence":
        x0 = project(basis, history.values[:, -1])
        traj = persistence_forecast(x0[:, 0], args.steps)
        forecast = to_raw(reconstruct(basis, traj, times=times))
    elif method == "mean":
        pred = mean_forecast(np.asarray(model)[:, None], args.steps)
        forecast = to_raw(SnapshotMatrix(layout, times, pred))
    else:
        raise ConfigError(f"predict does not support method {method!r}")
    elapsed = time.perf_counter() - tic

    formats.write_snapshot_csv(args.out, forecast)
    print(f"wrote {args.out}: {args.steps} steps, rollout wall time {elapsed:.4f} s")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    experiment = config_mod.build_experiment(cfg)
    report = bench_mod.run_experiment(experiment)
    paths = bench_mod.write_report(report, args.out)
    print(f"rank {report.rank} (energy {report.energy_captured:.6f}), "
          f"split {'/'.join(str(s) for s in report.split_sizes)}")
    for res in report.results:
        if res.status == "ok":
            print(
                f"  {res.name:<16} rmse {res.rmse_pa:.4f} Pa "
                f"(scaled {res.rmse_scaled:.6f}) fit {res.fit_seconds:.3f} s "
                f"rollout {res.rollout_seconds:.3f} s"
            )
        else:
            print(f"  {res.name:<16} {res.status}")
    for key in ("summary", "plot", "json"):
        print(f"wrote {paths[key]}")
    return EXIT_OK


def _describe_snapshot(data: SnapshotMatrix):
    print(f"snapshot: {data.n_state} rows x {data.n_times} columns")
    if data.n_times:
        print(f"  t0 {data.t0:.6g} s, dt {data.dt:.6g} s")
    for f in data.layout.fields:
        scale = ", ".join(
            f"(off={o:.6g}, fac={s:.6g})"
            for o, s in zip(f.scale_offset, f.scale_factor)
        )
        print(f"  field {f.name}: {f.components} x {f.points} points, scaling {scale}")


def _describe_basis(basis):
    print(f"pod basis: n_state {basis.n_state}, rank {basis.rank}")
    head = ", ".join(f"{s:.6g}" for s in basis.singular_values[:8])
    print(f"  sigma head: {head}")
    r30 = min(30, basis.singular_values.size)
    print(
        f"  energy at {r30} modes: {basis.energy_at(r30):.6f} "
        f"(default threshold 0.9982)"
    )


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    blob = path.read_bytes()
    if blob[:4] not in (
        formats.MAGIC_SNAPSHOT, formats.MAGIC_BASIS, formats.MAGIC_OPERATORS,
        formats.MAGIC_LINEAR_AR, formats.MAGIC_PERSISTENCE, formats.MAGIC_MEAN,
    ):
        raise FormatError(f"{path}: unknown magic {blob[:4]!r}")
    for kind, obj in formats.iter_containers(blob, str(path)):
        if kind == "snapshot":
            _describe_snapshot(obj)
        elif kind == "basis":
            _describe_basis(obj)
        elif kind == "operators":
            print(
                f"operators: rank {obj.rank}, terms {obj.modelform}, "
                f"lambda {obj.lam:.6g}, dt {obj.dt:.6g} s"
            )
        elif kind == "linear_ar":
            print(f"linear AR model: rank {obj.rank}, lambda {obj.lam:.6g}, "
                  f"dt {obj.dt:.6g} s")
        elif kind == "persistence":
            print("persistence model (no coefficients)")
        elif kind == "mean":
            print(f"mean-state model: {obj.size} rows")
    return EXIT_OK


_HANDLERS = {
    "datagen": cmd_datagen,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handler = _HANDLERS[args.command]
    try:
        return handler(args)
    except (ConfigError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (StabilityError, DivergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.command == "predict":
            return EXIT_ROLLOUT
        return EXIT_SOLVER
    except PipeRomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
