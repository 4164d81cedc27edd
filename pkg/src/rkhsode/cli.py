"""Command-line front end: simulate | fit | predict | benchmark | convergence.

Every command is deterministic given (--seed, config) in single-threaded
mode and writes exactly one run manifest next to its outputs. Exit codes:
0 success, 2 usage/config error, 3 numerical divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .data import Dataset, add_noise, load_dataset, save_dataset
from .errors import ConfigurationError, DataFormatError, DivergenceError, NumericalError
from .evaluation import (
    PROTOCOL_NAMES,
    convergence_experiment,
    default_protocol,
    err_metric,
    noise_sweep,
    predict_at_times,
)
from .kernels import FeatureMapSpec
from .ode import SYSTEM_NAMES, field_from_json, field_to_json, make_system, simulate_dataset
from .rng import child_seed, generator
from .solver import SolverConfig, config_from_json, config_to_json, penalty_fit, predict
from dataclasses import replace

_IC_BOXES = {
    "fhn": ((-2.0, -2.0), (2.0, 2.0)),
    "lorenz63": ((-10.0, -10.0, 10.0), (10.0, 10.0, 30.0)),
    "lorenz96": ((-5.0,) * 6, (10.0,) * 6),
    "harmonic": ((-0.01, -0.01), (0.01, 0.01)),
}


def _args_json(args) -> dict:
    return {
        k: v
        for k, v in vars(args).items()
        if k != "func" and isinstance(v, (str, int, float, bool, type(None)))
    }


def _write_manifest(out_path: str, command: str, config_obj: dict, seed, inputs, outputs, t_start):
    blob = json.dumps(config_obj, sort_keys=True, default=str).encode()
    manifest = {
        "command": command,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_clock_s": round(time.perf_counter() - t_start, 3),
        "version": __version__,
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest_path(out: str) -> str:
    if os.path.isdir(out):
        return os.path.join(out, "manifest.json")
    base, _ = os.path.splitext(out)
    return base + ".manifest.json"


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, (str, int)) else repr(float(c)) for c in row])


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    system = make_system(args.system, dim=args.dim, forcing=args.forcing)
    lo, hi = _IC_BOXES[args.system]
    if args.system == "lorenz96" and args.dim is not None:
        lo, hi = (-5.0,) * system.dim, (10.0,) * system.dim
    if args.ic_low is not None:
        lo = tuple(float(v) for v in args.ic_low.split(","))
    if args.ic_high is not None:
        hi = tuple(float(v) for v in args.ic_high.split(","))
    if len(lo) != system.dim or len(hi) != system.dim:
        raise ConfigurationError(f"ic box must have {system.dim} coordinates")
    # ICs draw from their own seed so --sigma 0 output is identical across --seed
    rng = generator(args.ic_seed, "ic-sim")
    ics = rng.uniform(np.asarray(lo), np.asarray(hi), size=(args.n_traj, system.dim))
    ds = simulate_dataset(system, ics, args.t0, args.dt, args.n_obs, args.substeps)
    if args.sigma > 0:
        ds = add_noise(ds, args.sigma, seed=child_seed(args.seed, "noise"))
    save_dataset(ds, args.out)
    _write_manifest(
        _manifest_path(args.out),
        "simulate",
        _args_json(args),
        args.seed,
        [],
        [args.out],
        t0,
    )
    return 0


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------


def _load_config(args) -> SolverConfig:
    obj = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
    # flag > config file > default
    overrides = {
        "h": args.h,
        "rho": args.rho,
        "lambda": getattr(args, "lambda"),
        "gamma0": args.gamma0,
        "gamma_max": args.gamma_max,
        "max_iters": args.max_iters,
        "early_stop_eps": args.early_stop_eps,
        "seed": args.seed,
        "init": args.init,
    }
    for key, val in overrides.items():
        if val is not None:
            obj[key] = val
    if "kernel" not in obj and args.n_features is not None:
        obj["kernel"] = {
            "family": "fourier_features",
            "params": {"input_dim": args.kernel_dim, "lengthscales": [args.lengthscale]},
            "n_features": args.n_features,
            "seed": child_seed(obj.get("seed", 0), "features"),
        }
    return config_from_json(obj)


def _grid_search(dataset, cfg, fraction, threads):
    """Hold out a trajectory fraction and grid-search (lambda, rho) on Err."""
    n = dataset.n_trajectories
    n_val = max(1, int(round(fraction * n)))
    if n_val >= n:
        raise ConfigurationError("validation split leaves no training trajectories")
    rng = generator(cfg.seed, "validation-split")
    perm = rng.permutation(n)
    val_idx = set(perm[:n_val].tolist())
    train = Dataset([tr for i, tr in enumerate(dataset.trajectories) if i not in val_idx])
    val = [tr for i, tr in enumerate(dataset.trajectories) if i in val_idx]
    best = None
    for lam in (1e-8, 1e-6, 1e-4):
        for rho in (0.05, 0.1, 0.2):
            trial = replace(cfg, lam=lam, rho=rho)
            try:
                fit = penalty_fit(train, trial, threads=threads)
            except (DivergenceError, NumericalError):
                continue
            errs = []
            for tr in val:
                if tr.n_obs < 2:
                    continue
                pred = predict_at_times(fit.field, tr.values[0], tr.times[0], tr.times, cfg.h)
                errs.append(err_metric(tr.times, pred, tr.values))
            score = float(np.mean(errs)) if errs else np.inf
            if best is None or score < best[0]:
                best = (score, lam, rho)
    if best is None:
        raise NumericalError("every validation fit diverged")
    return replace(cfg, lam=best[1], rho=best[2])


def _cmd_fit(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset(args.data)
    if getattr(args, "kernel_dim", None) is None:
        args.kernel_dim = dataset.dim
    cfg = _load_config(args)
    if isinstance(cfg.kernel, FeatureMapSpec) and cfg.kernel.input_dim != dataset.dim:
        raise ConfigurationError(
            f"kernel input_dim {cfg.kernel.input_dim} does not match data dim {dataset.dim}"
        )
    threads = args.threads
    if args.validate is not None:
        cfg = _grid_search(dataset, cfg, args.validate, threads)
    fit = penalty_fit(dataset, cfg, threads=threads)

    os.makedirs(args.out, exist_ok=True)
    outputs = []
    field_path = os.path.join(args.out, "field.json")
    with open(field_path, "w", encoding="utf-8") as fh:
        json.dump(field_to_json(fit.field), fh)
        fh.write("\n")
    outputs.append(field_path)
    for tr, z, grid in zip(dataset.trajectories, fit.latents, fit.grids):
        path = os.path.join(args.out, f"latents_{tr.traj_id}.csv")
        nodes = grid.nodes()
        _write_csv(
            path,
            ["t"] + [f"z{i + 1}" for i in range(dataset.dim)],
            [(repr(float(t)), *row) for t, row in zip(nodes, z)],
        )
        outputs.append(path)
    traces_path = os.path.join(args.out, "traces.csv")
    _write_csv(
        traces_path,
        ["iter", "data_loss", "constraint_residual", "gamma", "field_change"],
        fit.traces_rows(),
    )
    outputs.append(traces_path)
    config_path = os.path.join(args.out, "config.json")
    with open(config_path, "w", encoding="utf-8") as fh:
        json.dump(config_to_json(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(config_path)
    _write_manifest(
        _manifest_path(args.out), "fit", config_to_json(cfg), cfg.seed, [args.data], outputs, t0
    )
    print(f"fit: {fit.iterations_run} iterations, stop={fit.stop_reason}")
    return 0


# --------------------------------------------------------------------------
# predict
# --------------------------------------------------------------------------


def _cmd_predict(args) -> int:
    t0 = time.perf_counter()
    with open(args.field, encoding="utf-8") as fh:
        field = field_from_json(json.load(fh))
    x0 = np.asarray([float(v) for v in args.x0.split(",")])
    times, states = predict(field, x0, args.t0, args.horizon, args.h)
    _write_csv(
        args.out,
        ["traj_id", "t"] + [f"y{i + 1}" for i in range(states.shape[1])],
        [("pred", repr(float(t)), *row) for t, row in zip(times, states)],
    )
    _write_manifest(
        _manifest_path(args.out), "predict", _args_json(args), args.seed, [args.field], [args.out], t0
    )
    return 0


# --------------------------------------------------------------------------
# benchmark
# --------------------------------------------------------------------------


def _cmd_benchmark(args) -> int:
    t0 = time.perf_counter()
    protocol = default_protocol(args.protocol)
    updates = {}
    for name in ("n_train", "n_test", "n_obs", "max_iters", "n_features", "lam", "rho", "h"):
        val = getattr(args, name)
        if val is not None:
            updates[name] = val
    if args.sigmas is not None:
        updates["sigmas"] = tuple(float(s) for s in args.sigmas.split(","))
    if updates:
        protocol = replace(protocol, **updates)
    report = noise_sweep(protocol, n_replicates=args.replicates, seed=args.seed, threads=args.threads)

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "sweep.csv")
    _write_csv(
        csv_path,
        ["system", "sigma", "replicate", "err_mean", "err_sem", "runtime_s"],
        report.rows(),
    )
    json_path = os.path.join(args.out, "sweep.json")

    def fin(v):
        return v if np.isfinite(v) else None

    payload = {
        "system": report.system,
        "sigmas": report.sigmas,
        "mean_err": [fin(v) for v in report.mean_err],
        "sem_err": [fin(v) for v in report.sem_err],
        "cells": [
            {
                "sigma": c.sigma,
                "replicate": c.replicate,
                "err_mean": fin(c.err_mean),
                "err_sem": fin(c.err_sem),
                "runtime_s": c.runtime_s,
                "diverged": c.diverged,
            }
            for c in report.cells
        ],
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(
        _manifest_path(args.out), "benchmark", _args_json(args), args.seed, [], [csv_path, json_path], t0
    )
    return 0


# --------------------------------------------------------------------------
# convergence
# --------------------------------------------------------------------------


def _cmd_convergence(args) -> int:
    t0 = time.perf_counter()
    report = convergence_experiment(
        n_features=args.n_features or 200,
        n_noise_replicates=args.replicates,
        sigma=args.sigma,
        full_m=args.full_m,
        min_m=args.min_m,
        seed=args.seed,
        threads=args.threads,
    )
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "convergence.csv")
    _write_csv(
        csv_path,
        ["m", "mean_l2_sq"],
        [(int(m), v) for m, v in zip(report.sample_counts, report.mean_l2_sq)],
    )
    json_path = os.path.join(args.out, "convergence.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "sample_counts": report.sample_counts,
                "mean_l2_sq": report.mean_l2_sq,
                "slope": report.slope,
                "intercept": report.intercept,
                "excluded": report.excluded,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    _write_manifest(
        _manifest_path(args.out), "convergence", _args_json(args), args.seed, [], [csv_path, json_path], t0
    )
    print(f"convergence slope: {report.slope:.3f}")
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rkhsode", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    default_threads = int(os.environ.get("RKHS_ODE_THREADS", "1"))

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=default_threads)
        p.add_argument("--out", required=True)

    p = sub.add_parser("simulate", help="generate trajectories of a reference system")
    common(p)
    p.add_argument("--system", choices=SYSTEM_NAMES, required=True)
    p.add_argument("--n-traj", type=int, default=50)
    p.add_argument("--n-obs", type=int, default=201)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--substeps", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--forcing", type=float, default=8.0)
    p.add_argument("--ic-seed", type=int, default=0)
    p.add_argument("--ic-low", default=None, help="comma-separated lower corner of the IC box")
    p.add_argument("--ic-high", default=None, help="comma-separated upper corner of the IC box")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit a vector field to a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="solver config JSON")
    p.add_argument("--validate", type=float, default=None, metavar="FRACTION",
                   help="grid-search (lambda, rho) on a held-out trajectory fraction")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--lambda", type=float, default=None)
    p.add_argument("--gamma0", type=float, default=None)
    p.add_argument("--gamma-max", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--early-stop-eps", type=float, default=None)
    p.add_argument("--init", choices=("gradient_matching", "zero_field"), default=None)
    p.add_argument("--n-features", type=int, default=None,
                   help="build a default Fourier feature kernel when the config has none")
    p.add_argument("--lengthscale", type=float, default=1.0)
    p.set_defaults(func=_cmd_fit, seed=None)

    p = sub.add_parser("predict", help="Euler-integrate a stored field")
    common(p)
    p.add_argument("--field", required=True)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("benchmark", help="noise-sweep benchmark of a reference system")
    common(p)
    p.add_argument("--protocol", choices=PROTOCOL_NAMES, required=True)
    p.add_argument("--sigmas", default=None, help="comma-separated noise levels")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--n-train", type=int, default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--n-obs", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--n-features", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--h", type=float, default=None)
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("convergence", help="empirical error-vs-samples rate experiment")
    common(p)
    p.add_argument("--n-features", type=int, default=200)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--full-m", type=int, default=5120)
    p.add_argument("--min-m", type=int, default=5)
    p.set_defaults(func=_cmd_convergence)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, NumericalError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except (OSError, DataFormatError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
