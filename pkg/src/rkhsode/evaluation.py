"""Prediction metrics, noise-sweep benchmarks, and the convergence experiment.

The Err metric is the time-gap weighted root-sum-square distance between a
predicted and a true trajectory at shared observation times,

    Err = sqrt( sum_{i>=2} (t_i - t_{i-1}) |y_i - yhat_i|^2 ).

The trajectory distance used by the convergence experiment is the exact L^2
norm squared of the difference of two piecewise-linear curves.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, Trajectory, add_noise
from .errors import ConfigurationError, DivergenceError, NumericalError
from .kernels import FeatureMapSpec
from .ode import FeatureField, VectorField, ZeroField, euler_integrate, make_system, simulate_dataset
from .rng import child_seed, generator
from .solver import SolverConfig, penalty_fit

__all__ = [
    "err_metric",
    "l2_sq_distance",
    "constraint_residual",
    "predict_at_times",
    "BenchmarkProtocol",
    "SweepCell",
    "SweepReport",
    "noise_sweep",
    "default_protocol",
    "ConvergenceReport",
    "convergence_experiment",
    "PROTOCOL_NAMES",
]


def err_metric(times, pred, truth) -> float:
    """Time-gap weighted prediction error sqrt(sum dt |y - yhat|^2)."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(pred, dtype=float)
    y = np.asarray(truth, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if p.shape != y.shape or p.shape[0] != t.shape[0]:
        raise ConfigurationError("err_metric needs matching times/pred/truth shapes")
    if t.shape[0] < 2:
        raise ConfigurationError("err_metric needs at least two observations")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ConfigurationError("err_metric times must be strictly ascending")
    sq = np.sum((p - y) ** 2, axis=1)
    return float(np.sqrt(np.sum(dt * sq[1:])))


def l2_sq_distance(times_a, values_a, times_b, values_b, t_hi: float | None = None) -> float:
    """Integral of |a(t) - b(t)|^2 with both curves piecewise linear.

    Integrates from the later of the two start times to ``t_hi`` (default:
    the earlier of the two end times). Each segment of the union grid holds a
    quadratic integrand, integrated exactly.
    """
    ta = np.asarray(times_a, dtype=float)
    tb = np.asarray(times_b, dtype=float)
    va = np.asarray(values_a, dtype=float)
    vb = np.asarray(values_b, dtype=float)
    if va.ndim == 1:
        va = va[:, None]
    if vb.ndim == 1:
        vb = vb[:, None]
    if va.shape[0] != ta.shape[0] or vb.shape[0] != tb.shape[0]:
        raise ConfigurationError("value arrays must have one row per time")
    lo = max(ta[0], tb[0])
    hi = min(ta[-1], tb[-1]) if t_hi is None else float(t_hi)
    if hi > ta[-1] + 1e-12 or hi > tb[-1] + 1e-12 or hi < lo:
        raise ConfigurationError(f"curves do not cover the requested interval [{lo}, {hi}]")
    grid = np.union1d(ta, tb)
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0 or grid[0] > lo:
        grid = np.concatenate([[lo], grid])
    if grid[-1] < hi:
        grid = np.concatenate([grid, [hi]])
    fa = np.stack([np.interp(grid, ta, va[:, c]) for c in range(va.shape[1])], axis=1)
    fb = np.stack([np.interp(grid, tb, vb[:, c]) for c in range(vb.shape[1])], axis=1)
    diff = fa - fb
    d0 = diff[:-1]
    d1 = diff[1:]
    seg = np.einsum("ij,ij->i", d0, d0) + np.einsum("ij,ij->i", d0, d1) + np.einsum("ij,ij->i", d1, d1)
    return float(np.sum(np.diff(grid) * seg) / 3.0)


def constraint_residual(latents, field: VectorField, h: float) -> float:
    """(1/(n k)) sum_i sum_l |z_{i,l+1} - z_il - h f(z_il)|^2.

    ``latents`` is one (k+1, d) array or a list of them; per-trajectory
    interval counts may differ, each trajectory is averaged over its own k.
    """
    if isinstance(latents, np.ndarray):
        latents = [latents]
    total = 0.0
    for z in latents:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        k = z.shape[0] - 1
        if k == 0:
            continue
        r = z[1:] - z[:-1] - h * field.eval_many(z[:-1])
        total += float(np.sum(r * r)) / k
    return total / len(latents)


def predict_at_times(field: VectorField, x0, t0: float, obs_times, h: float) -> np.ndarray:
    """Euler-integrate on the fine step h and read states off at obs_times."""
    obs_times = np.asarray(obs_times, dtype=float)
    span = float(obs_times[-1] - t0)
    steps = max(int(np.ceil(span / h - 0.5)), 0)
    orbit = euler_integrate(field, x0, t0, h, steps)
    idx = np.ceil((obs_times - t0) / h - 0.5).astype(int)
    idx = np.clip(idx, 0, steps)
    return orbit[idx]


# --------------------------------------------------------------------------
# Noise-sweep benchmarks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkProtocol:
    """Train/test topology and solver settings of one benchmark system."""

    system: str
    sigmas: tuple
    n_train: int = 50
    n_test: int = 100
    n_obs: int = 201
    dt_obs: float = 0.1
    ic_low: tuple = (-2.0, -2.0)
    ic_high: tuple = (2.0, 2.0)
    substeps: int = 100
    err_horizon: float | None = None  # truncate Err to this many time units
    h: float = 0.1
    n_features: int = 256
    lam: float = 1e-4
    rho: float = 0.3
    gamma0: float = 1.0
    max_iters: int = 500
    early_stop_eps: float = 1e-3
    dim: int | None = None
    forcing: float = 8.0
    bandwidth_fraction: float = 0.2  # gaussian lengthscale = fraction of data range


def default_protocol(name: str) -> BenchmarkProtocol:
    if name == "fhn":
        return BenchmarkProtocol(
            system="fhn",
            sigmas=(0.120, 0.365, 0.610, 0.855, 1.100),
            dt_obs=0.1,
            h=0.1,
            ic_low=(-2.0, -2.0),
            ic_high=(2.0, 2.0),
        )
    if name == "lorenz63":
        return BenchmarkProtocol(
            system="lorenz63",
            sigmas=(0.5, 1.2, 1.9, 2.6, 3.3),
            dt_obs=0.01,
            h=0.01,
            ic_low=(-10.0, -10.0, 10.0),
            ic_high=(10.0, 10.0, 30.0),
            err_horizon=0.2,
        )
    if name == "lorenz96":
        return BenchmarkProtocol(
            system="lorenz96",
            sigmas=(0.5, 1.2, 1.9, 2.6, 3.3),
            dt_obs=0.01,
            h=0.01,
            ic_low=(-5.0,) * 6,
            ic_high=(10.0,) * 6,
            err_horizon=0.2,
            dim=6,
        )
    raise ConfigurationError(f"no benchmark protocol named {name!r}")


PROTOCOL_NAMES = ("fhn", "lorenz63", "lorenz96")


@dataclass
class SweepCell:
    sigma: float
    replicate: int
    err_mean: float
    err_sem: float
    errs: np.ndarray
    baseline_errs: np.ndarray
    runtime_s: float
    diverged: bool = False


@dataclass
class SweepReport:
    system: str
    sigmas: list
    cells: list
    mean_err: list       # per sigma, mean of cell means over replicates
    sem_err: list        # per sigma, SEM of cell means over replicates

    def rows(self):
        for c in self.cells:
            yield (self.system, c.sigma, c.replicate, c.err_mean, c.err_sem, c.runtime_s)


def _protocol_config(protocol: BenchmarkProtocol, train: Dataset, seed: int) -> SolverConfig:
    spans = np.ptp(np.vstack([tr.values for tr in train.trajectories]), axis=0)
    lengthscales = np.maximum(protocol.bandwidth_fraction * spans, 1e-6)
    featmap = FeatureMapSpec(
        n_features=protocol.n_features,
        input_dim=train.dim,
        lengthscales=tuple(lengthscales),
        seed=child_seed(seed, "features"),
    )
    return SolverConfig(
        h=protocol.h,
        kernel=featmap,
        rho=protocol.rho,
        lam=protocol.lam,
        gamma0=protocol.gamma0,
        max_iters=protocol.max_iters,
        early_stop_eps=protocol.early_stop_eps,
        seed=seed,
    )


def benchmark_data(protocol: BenchmarkProtocol, seed: int):
    """Clean train/test datasets for a protocol (noise is added per cell)."""
    system = make_system(protocol.system, dim=protocol.dim, forcing=protocol.forcing)
    lo = np.asarray(protocol.ic_low, dtype=float)
    hi = np.asarray(protocol.ic_high, dtype=float)
    rng_train = generator(seed, "ic-train")
    rng_test = generator(seed, "ic-test")
    ics_train = rng_train.uniform(lo, hi, size=(protocol.n_train, system.dim))
    ics_test = rng_test.uniform(lo, hi, size=(protocol.n_test, system.dim))
    train = simulate_dataset(
        system, ics_train, 0.0, protocol.dt_obs, protocol.n_obs, protocol.substeps
    )
    test = simulate_dataset(
        system, ics_test, 0.0, protocol.dt_obs, protocol.n_obs, protocol.substeps, id_prefix="test"
    )
    return system, train, test


def evaluate_on_test(field: VectorField, test: Dataset, protocol: BenchmarkProtocol) -> np.ndarray:
    """Per-trajectory Err of a field's predictions from each test initial condition."""
    errs = []
    for tr in test.trajectories:
        times = tr.times
        if protocol.err_horizon is not None:
            keep = times <= times[0] + protocol.err_horizon + 1e-12
            times = times[keep]
            truth = tr.values[keep]
        else:
            truth = tr.values
        pred = predict_at_times(field, tr.values[0], tr.times[0], times, protocol.h)
        errs.append(err_metric(times, pred, truth))
    return np.asarray(errs)


def noise_sweep(
    protocol: BenchmarkProtocol,
    sigmas=None,
    n_replicates: int = 5,
    seed: int = 0,
    threads: int = 1,
) -> SweepReport:
    """Fit/predict over a noise grid: train sets get noise, the test set stays clean.

    Fit divergence is recorded in the affected cell rather than raised.
    """
    sigmas = list(protocol.sigmas if sigmas is None else sigmas)
    _, train_clean, test = benchmark_data(protocol, seed)
    cells = []
    for sigma in sigmas:
        for rep in range(n_replicates):
            t0 = _time.perf_counter()
            noise_seed = child_seed(seed, "noise", sigmas.index(sigma), rep)
            train = add_noise(train_clean, sigma, seed=noise_seed)
            cfg = _protocol_config(protocol, train, child_seed(seed, "solver", rep))
            try:
                fit = penalty_fit(train, cfg, threads=threads)
                errs = evaluate_on_test(fit.field, test, protocol)
                base = evaluate_on_test(ZeroField(train.dim), test, protocol)
                cells.append(
                    SweepCell(
                        sigma=sigma,
                        replicate=rep,
                        err_mean=float(np.mean(errs)),
                        err_sem=float(np.std(errs, ddof=1) / np.sqrt(len(errs))) if len(errs) > 1 else 0.0,
                        errs=errs,
                        baseline_errs=base,
                        runtime_s=_time.perf_counter() - t0,
                    )
                )
            except (DivergenceError, NumericalError):
                cells.append(
                    SweepCell(
                        sigma=sigma,
                        replicate=rep,
                        err_mean=float("nan"),
                        err_sem=float("nan"),
                        errs=np.asarray([]),
                        baseline_errs=np.asarray([]),
                        runtime_s=_time.perf_counter() - t0,
                        diverged=True,
                    )
                )
    mean_err, sem_err = [], []
    for sigma in sigmas:
        vals = np.asarray([c.err_mean for c in cells if c.sigma == sigma and not c.diverged])
        mean_err.append(float(np.mean(vals)) if vals.size else float("nan"))
        sem_err.append(
            float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        )
    return SweepReport(
        system=protocol.system, sigmas=sigmas, cells=cells, mean_err=mean_err, sem_err=sem_err
    )


# --------------------------------------------------------------------------
# Convergence-rate experiment
# --------------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    sample_counts: list
    mean_l2_sq: list
    slope: float
    intercept: float
    excluded: list = field(default_factory=list)  # (m, replicate) cells that diverged


def convergence_experiment(
    n_features: int = 200,
    n_noise_replicates: int = 10,
    sigma: float = 0.05,
    full_m: int = 5120,
    min_m: int = 5,
    horizon: float = 5.0,
    grid_h: float | None = None,
    lam: float = 1e-7,
    rho: float = 0.3,
    max_iters: int = 150,
    early_stop_eps: float = 1e-6,
    seed: int = 0,
    threads: int = 1,
) -> ConvergenceReport:
    """Estimate the empirical rate of the trajectory error in the sample count.

    A 1D ground-truth field is drawn from the solver's own random-feature
    family; one trajectory of ``full_m`` samples is simulated and noised
    ``n_noise_replicates`` times; each noisy copy is subsampled by factors of
    two down to ``min_m`` samples and refitted with a fixed grid step, and
    the mean squared L2 distance between the reconstructed and true curves
    is regressed on the sample count in log-log coordinates.
    """
    if full_m < min_m or min_m < 2:
        raise ConfigurationError("need full_m >= min_m >= 2")
    ms = []
    m = full_m
    while m >= min_m:
        ms.append(m)
        if m % 2 != 0:
            break
        m //= 2
    ms = ms[::-1]

    featmap = FeatureMapSpec(
        n_features=n_features,
        input_dim=1,
        lengthscales=(1.0,),
        seed=child_seed(seed, "features"),
    )
    rng = generator(seed, "truth-coef")
    coef = rng.normal(0.0, 1.0, size=(featmap.n_outputs, 1))
    truth_field = FeatureField(featmap, coef)

    dt_full = horizon / full_m
    x0 = np.asarray([0.5])
    substeps = 4
    fine = euler_integrate(truth_field, x0, 0.0, dt_full / substeps, full_m * substeps)
    fine_times = (dt_full / substeps) * np.arange(full_m * substeps + 1)
    full_times = fine_times[::substeps][:full_m]  # t_j = j * dt_full, j < full_m
    full_values = fine[::substeps][:full_m]

    h = grid_h if grid_h is not None else horizon / min(full_m, 1280)

    noises = [
        generator(seed, "noise", r).normal(0.0, sigma, size=full_values.shape)
        for r in range(n_noise_replicates)
    ]

    mean_l2 = []
    excluded = []
    for m in ms:
        stride = full_m // m
        idx = np.arange(m) * stride
        vals = []
        for r in range(n_noise_replicates):
            y = full_values[idx] + noises[r][idx]
            ds = Dataset([Trajectory("conv", full_times[idx], y)])
            # f0 = 0: central differences of densely sampled noisy data blow
            # up as 1/dt and poison the gradient-matching start
            cfg = SolverConfig(
                h=h,
                kernel=featmap,
                rho=rho,
                lam=lam,
                max_iters=max_iters,
                early_stop_eps=early_stop_eps,
                seed=child_seed(seed, "fit", m, r),
                init="zero_field",
            )
            try:
                fit = penalty_fit(ds, cfg, threads=threads)
            except (DivergenceError, NumericalError):
                excluded.append((m, r))
                continue
            grid = fit.grids[0]
            vals.append(
                l2_sq_distance(grid.nodes(), fit.latents[0], fine_times, fine, t_hi=grid.nodes()[-1])
            )
        mean_l2.append(float(np.mean(vals)) if vals else float("nan"))

    ms_arr = np.asarray(ms, dtype=float)
    l2_arr = np.asarray(mean_l2)
    ok = np.isfinite(l2_arr) & (l2_arr > 0)
    if ok.sum() < 2:
        raise NumericalError("convergence experiment produced fewer than two usable points")
    slope, intercept = np.polyfit(np.log(ms_arr[ok]), np.log(l2_arr[ok]), 1)
    return ConvergenceReport(
        sample_counts=ms,
        mean_l2_sq=mean_l2,
        slope=float(slope),
        intercept=float(intercept),
        excluded=excluded,
    )
