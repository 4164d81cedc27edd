"""Penalty-method solver for nonparametric ODE fitting.

Alternates two exact minimizations of the penalized objective

    J(z, f, gamma) = (1/n) sum_i sum_j w_ij |y_ij - z_{i,k_j}|^2
                   + (gamma/n) sum_i (1/k_i) sum_l |z_{i,l+1} - z_il - h f(z_il)|^2
                   + lambda ||f - f0||_H^2

while gamma grows geometrically. The z-step Taylor-linearizes f around the
previous iterate, which makes the per-trajectory subproblem a convex
quadratic with block-tridiagonal normal equations (solved banded). The
f-step is a multivariate kernel ridge regression on the Euler increments:
d feature-space systems of size n_features by default, or the exact
representer solve over all grid nodes for small problems.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solveh_banded
from threadpoolctl import threadpool_limits

from .data import Dataset, Trajectory, build_grids, sample_weights
from .errors import ConfigurationError, DivergenceError, NumericalError
from .kernels import (
    FeatureMapSpec,
    MatrixKernelSpec,
    kernel_from_json,
    kernel_to_json,
    scalar_cross,
)
from .ode import FeatureField, RepresenterField, VectorField, ZeroField, euler_integrate

__all__ = [
    "SolverConfig",
    "FitResult",
    "central_differences",
    "gradient_matching_init",
    "z_step",
    "f_step_features",
    "f_step_representer",
    "penalty_fit",
    "field_change_norm",
    "predict",
    "config_to_json",
    "config_from_json",
]

INIT_CHOICES = ("gradient_matching", "zero_field")


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the penalty solver; ``kernel`` and ``h`` are required."""

    h: float
    kernel: object
    rho: float = 0.1
    lam: float = 1e-6
    gamma0: float = 1.0
    gamma_max: float = 1e8
    max_iters: int = 500
    early_stop_eps: float = 1e-3
    seed: int = 0
    init: str = "gradient_matching"

    def __post_init__(self):
        for name in ("h", "rho", "lam", "gamma0", "gamma_max"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"config {name} must be positive")
        if self.max_iters < 0:
            raise ConfigurationError("max_iters must be >= 0")
        if not 0 < self.early_stop_eps < 1:
            raise ConfigurationError("early_stop_eps must lie in (0, 1)")
        if self.init not in INIT_CHOICES:
            raise ConfigurationError(f"init must be one of {INIT_CHOICES}")
        if self.kernel is None:
            raise ConfigurationError("config needs a kernel spec")


_CONFIG_KEYS = (
    "h",
    "rho",
    "lambda",
    "gamma0",
    "gamma_max",
    "max_iters",
    "early_stop_eps",
    "kernel",
    "seed",
    "init",
)


def config_to_json(cfg: SolverConfig) -> dict:
    return {
        "h": cfg.h,
        "rho": cfg.rho,
        "lambda": cfg.lam,
        "gamma0": cfg.gamma0,
        "gamma_max": cfg.gamma_max,
        "max_iters": cfg.max_iters,
        "early_stop_eps": cfg.early_stop_eps,
        "kernel": kernel_to_json(cfg.kernel),
        "seed": cfg.seed,
        "init": cfg.init,
    }


def config_from_json(obj: dict) -> SolverConfig:
    for key in ("h", "kernel"):
        if key not in obj:
            raise ConfigurationError(f"solver config is missing required key '{key}'")
    unknown = set(obj) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown solver config keys: {sorted(unknown)}")
    return SolverConfig(
        h=float(obj["h"]),
        kernel=kernel_from_json(obj["kernel"]) if isinstance(obj["kernel"], dict) else obj["kernel"],
        rho=float(obj.get("rho", 0.1)),
        lam=float(obj.get("lambda", 1e-6)),
        gamma0=float(obj.get("gamma0", 1.0)),
        gamma_max=float(obj.get("gamma_max", 1e8)),
        max_iters=int(obj.get("max_iters", 500)),
        early_stop_eps=float(obj.get("early_stop_eps", 1e-3)),
        seed=int(obj.get("seed", 0)),
        init=str(obj.get("init", "gradient_matching")),
    )


@dataclass
class FitResult:
    """Learned field, per-trajectory latent grid states, and iteration traces."""

    field: VectorField
    latents: list
    grids: list
    traces: dict
    iterations_run: int
    stop_reason: str
    fd_jacobian_fallback: bool = False
    init_field: VectorField | None = None

    def traces_rows(self):
        """Rows (iter, data_loss, constraint_residual, gamma, field_change)."""
        for s in range(self.iterations_run):
            yield (
                s,
                self.traces["data_loss"][s],
                self.traces["constraint_residual"][s],
                self.traces["gamma"][s],
                self.traces["field_change"][s],
            )


# --------------------------------------------------------------------------
# Initialization
# --------------------------------------------------------------------------


def central_differences(trajectory: Trajectory) -> np.ndarray:
    """Derivative estimates at the observation times.

    Interior points use (y_{j+1} - y_{j-1}) / (t_{j+1} - t_{j-1}); the
    endpoints fall back to one-sided differences.
    """
    t, y = trajectory.times, trajectory.values
    m = t.shape[0]
    if m < 2:
        raise ConfigurationError("central differences need at least two observations")
    out = np.empty_like(y)
    out[0] = (y[1] - y[0]) / (t[1] - t[0])
    out[-1] = (y[-1] - y[-2]) / (t[-1] - t[-2])
    if m > 2:
        out[1:-1] = (y[2:] - y[:-2]) / (t[2:] - t[:-2])[:, None]
    return out


def gradient_matching_init(dataset: Dataset, kernel, lam: float) -> VectorField:
    """Initial field f0 from ridge regression on central-difference slopes.

    Pools (y_j, dy_j) pairs from every trajectory with at least two
    observations and minimizes (1/M) sum |dy - f(y)|^2 + lam ||f||_H^2.
    """
    if lam <= 0:
        raise ConfigurationError("gradient matching needs lam > 0")
    pts, slopes, times = [], [], []
    for tr in dataset.trajectories:
        if tr.n_obs < 2:
            continue
        pts.append(tr.values)
        slopes.append(central_differences(tr))
        times.append(tr.times)
    if not pts:
        raise ConfigurationError("gradient matching needs a trajectory with >= 2 observations")
    X = np.vstack(pts)
    D = np.vstack(slopes)
    M = X.shape[0]

    if isinstance(kernel, FeatureMapSpec):
        t = np.concatenate(times) if kernel.time_augmented else None
        Phi = kernel.features(X, t)
        G = Phi.T @ Phi + lam * M * np.eye(Phi.shape[1])
        coef = np.linalg.solve(G, Phi.T @ D)
        return FeatureField(kernel, coef)
    if isinstance(kernel, MatrixKernelSpec):
        G1 = scalar_cross(kernel.scalar, X, X)
        d = kernel.dim
        K = np.kron(G1, kernel.mix)
        W = np.linalg.solve(K + lam * M * np.eye(M * d), D.reshape(-1))
        return RepresenterField(X, W.reshape(M, d), kernel)
    raise ConfigurationError(f"unsupported kernel type {type(kernel).__name__}")


# --------------------------------------------------------------------------
# z-step: banded quadratic minimization per trajectory
# --------------------------------------------------------------------------


def z_step(
    z_prev: np.ndarray,
    field: VectorField,
    gamma: float,
    grid,
    obs_nodes: np.ndarray,
    obs_values: np.ndarray,
    obs_weights: np.ndarray,
) -> np.ndarray:
    """Exact minimizer of the Taylor-linearized per-trajectory objective.

    Minimizes sum_j w_j |y_j - z_{k_j}|^2 + (gamma/k) sum_l |z_{l+1} -
    z_l - h (f(zbar_l) + J_f(zbar_l)(z_l - zbar_l))|^2 over the grid states,
    where zbar is the linearization point ``z_prev``. The normal equations
    are block tridiagonal (bandwidth 2d-1 in node-major ordering) and are
    solved with a symmetric banded factorization.
    """
    z_prev = np.asarray(z_prev, dtype=float)
    if not np.all(np.isfinite(z_prev)):
        raise DivergenceError("z_step called with non-finite linearization point")
    k = grid.k
    n_nodes, d = z_prev.shape
    if n_nodes != k + 1:
        raise ConfigurationError(f"z_prev has {n_nodes} rows, grid has {k + 1} nodes")
    if gamma < 0:
        raise ConfigurationError("gamma must be >= 0")

    diag_blocks = np.zeros((k + 1, d, d))
    rhs = np.zeros((k + 1, d))
    eye = np.eye(d)

    np.add.at(rhs, obs_nodes, obs_weights[:, None] * obs_values)
    w_node = np.zeros(k + 1)
    np.add.at(w_node, obs_nodes, obs_weights)
    diag_blocks += w_node[:, None, None] * eye

    sub_blocks = np.zeros((max(k, 0), d, d))
    if k > 0 and gamma > 0:
        times = None if field.autonomous else grid.nodes()[:-1]
        F, J = field.eval_and_jacobian_many(z_prev[:-1], times)
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(J))):
            ok = np.isfinite(F).all(axis=1) & np.isfinite(J).reshape(k, -1).all(axis=1)
            bad = int(np.argmin(ok))
            raise DivergenceError(f"non-finite linearization at grid node {bad}", step=bad)
        h = grid.h
        beta = gamma / k
        M = eye[None, :, :] + h * J
        c = h * (F - np.einsum("lij,lj->li", J, z_prev[:-1]))
        diag_blocks[:-1] += beta * np.einsum("lji,ljk->lik", M, M)
        diag_blocks[1:] += beta * eye
        sub_blocks[:] = -beta * M
        rhs[:-1] += -beta * np.einsum("lji,lj->li", M, c)
        rhs[1:] += beta * c

    # lower banded storage: ab[i, j] = H[i + j, j]
    N = (k + 1) * d
    bw = min(2 * d - 1, N - 1)
    ab = np.zeros((bw + 1, N))
    for a in range(d):
        for b in range(d):
            if a >= b:
                ab[a - b, b::d] = diag_blocks[:, a, b]
            if k > 0:
                ab[d + a - b, b::d][:-1] = sub_blocks[:, a, b]
    try:
        sol = solveh_banded(ab, rhs.reshape(-1), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"banded z-step system not positive definite: {exc}") from exc
    return sol.reshape(k + 1, d)


# --------------------------------------------------------------------------
# f-step: multivariate kernel ridge regression on Euler increments
# --------------------------------------------------------------------------


def _increment_targets(latents, grids, base_field):
    """Stack (z_il, t_il, u_il, weight-index i) over all l < k_i."""
    rows_x, rows_t, rows_u, rows_traj = [], [], [], []
    for i, (z, grid) in enumerate(zip(latents, grids)):
        if grid.k == 0:
            continue
        t = grid.nodes()[:-1]
        u = (z[1:] - z[:-1]) / grid.h
        rows_x.append(z[:-1])
        rows_t.append(t)
        rows_u.append(u)
        rows_traj.append(np.full(grid.k, i))
    if not rows_x:
        return None
    X = np.vstack(rows_x)
    t = np.concatenate(rows_t)
    U = np.vstack(rows_u)
    traj = np.concatenate(rows_traj)
    if base_field is not None:
        U = U - base_field.eval_many(X, t if not base_field.autonomous else None)
    return X, t, U, traj


def _warn_if_ill_conditioned(chol_factor: np.ndarray, threshold: float = 1e13) -> None:
    """Cheap condition proxy from the Cholesky diagonal; warns, never raises."""
    diag = np.abs(np.diag(chol_factor))
    if diag.min() == 0.0:
        cond = np.inf
    else:
        cond = (diag.max() / diag.min()) ** 2
    if cond > threshold:
        warnings.warn(
            f"f-step system is ill-conditioned (condition estimate {cond:.2e})",
            RuntimeWarning,
            stacklevel=3,
        )


def _f_step_features_core(latents, grids, gamma, lam, featmap, base_coef):
    """Shared ridge solve; returns (field, per-trajectory residual sums).

    The residual of the new field on the Euler increments falls out of the
    same feature matrix used by the solve: r_row = h (u_row - Phi corr).
    """
    n = len(latents)
    d = latents[0].shape[1]
    if base_coef is None:
        base_coef = np.zeros((featmap.n_outputs, d))
    packed = _increment_targets(latents, grids, None)
    if packed is None:
        return FeatureField(featmap, base_coef.copy()), np.zeros(n)
    X, t, U_raw, traj = packed
    h = grids[0].h
    k_per = np.asarray([g.k for g in grids], dtype=float)
    w_rows = gamma * h**2 / (n * k_per[traj])

    Phi = featmap.features(X, t if featmap.time_augmented else None)
    U = U_raw - Phi @ base_coef
    WPhi = w_rows[:, None] * Phi
    G = Phi.T @ WPhi + lam * np.eye(Phi.shape[1])
    rhs = WPhi.T @ U
    try:
        cf = cho_factor(G, lower=True)
        corr = cho_solve(cf, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"f-step normal equations failed: {exc}") from exc
    _warn_if_ill_conditioned(cf[0])
    if not np.all(np.isfinite(corr)):
        raise NumericalError("f-step produced non-finite coefficients")
    res_rows = h**2 * np.sum((U - Phi @ corr) ** 2, axis=1)
    res_per_traj = np.zeros(n)
    np.add.at(res_per_traj, traj.astype(int), res_rows)
    return FeatureField(featmap, base_coef + corr), res_per_traj


def f_step_features(
    latents: list,
    grids: list,
    gamma: float,
    lam: float,
    featmap: FeatureMapSpec,
    base_coef: np.ndarray | None = None,
) -> FeatureField:
    """Feature-space ridge solve; returns the collapsed field f0 + correction.

    ``base_coef`` holds f0's coefficients on the same feature map (zero when
    absent). Row weights are gamma h^2 / (n k_i) per the multi-trajectory
    objective; one Cholesky factorization serves all d output coordinates.
    """
    field, _ = _f_step_features_core(latents, grids, gamma, lam, featmap, base_coef)
    return field


def f_step_representer(
    latents: list,
    grids: list,
    gamma: float,
    lam: float,
    kernel: MatrixKernelSpec,
    base_field: VectorField | None = None,
) -> RepresenterField:
    """Exact representer solve over all grid nodes carrying an Euler target.

    Solves (K + lam * diag(1/w_row)) W = U blockwise, the kernel ridge
    normal equations of the f-objective; intended for small problems and as
    the oracle path mirrored by the feature-space solver.
    """
    n = len(latents)
    packed = _increment_targets(latents, grids, base_field)
    if packed is None:
        raise ConfigurationError("representer f-step needs at least one grid interval")
    X, t, U, traj = packed
    h = grids[0].h
    d = U.shape[1]
    k_per = np.asarray([g.k for g in grids], dtype=float)
    w_rows = gamma * h**2 / (n * k_per[traj])

    G1 = scalar_cross(kernel.scalar, X, X)
    K = np.kron(G1, kernel.mix)
    reg = lam / np.repeat(w_rows, d)
    system = K + np.diag(reg)
    try:
        W = np.linalg.solve(system, U.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"representer f-step solve failed: {exc}") from exc
    cond = float(np.linalg.cond(system))
    if cond > 1e13:
        warnings.warn(
            f"representer f-step system is ill-conditioned (condition {cond:.2e})",
            RuntimeWarning,
            stacklevel=2,
        )
    if not np.all(np.isfinite(W)):
        raise NumericalError("representer f-step produced non-finite weights")
    return RepresenterField(X, W.reshape(-1, d), kernel, base=base_field)


# --------------------------------------------------------------------------
# Field-change norm and prediction
# --------------------------------------------------------------------------


def field_change_norm(f_new: VectorField, f_old: VectorField, probe: np.ndarray | None = None) -> float:
    """Relative change ||f_new - f_old|| / ||f_old||.

    Uses coefficient norms when both fields share a parameterization
    (feature map or representer centers); otherwise falls back to RMS field
    differences at the probe points. A zero old field returns +inf so early
    stopping never triggers on it.
    """
    if isinstance(f_old, ZeroField):
        return np.inf
    if (
        isinstance(f_new, FeatureField)
        and isinstance(f_old, FeatureField)
        and f_new.features == f_old.features
        and f_new.base is None
        and f_old.base is None
    ):
        denom = float(np.linalg.norm(f_old.coef))
        if denom == 0.0:
            return np.inf
        return float(np.linalg.norm(f_new.coef - f_old.coef)) / denom
    if (
        isinstance(f_new, RepresenterField)
        and isinstance(f_old, RepresenterField)
        and f_new.centers.shape == f_old.centers.shape
        and np.array_equal(f_new.centers, f_old.centers)
        and f_new.base is f_old.base
    ):
        denom = float(np.linalg.norm(f_old.weights))
        if denom == 0.0:
            return np.inf
        return float(np.linalg.norm(f_new.weights - f_old.weights)) / denom
    if probe is None:
        raise ConfigurationError("mismatched field parameterizations need probe points")
    t = None
    if not f_new.autonomous or not f_old.autonomous:
        raise ConfigurationError("probe-based field change norm supports autonomous fields only")
    diff = f_new.eval_many(probe, t) - f_old.eval_many(probe, t)
    denom = float(np.sqrt(np.mean(f_old.eval_many(probe, t) ** 2)))
    if denom == 0.0:
        return np.inf
    return float(np.sqrt(np.mean(diff**2))) / denom


def predict(field: VectorField, x0, t0: float, horizon: float, h: float):
    """Euler trajectory of the (learned) field from x0: (times, states)."""
    if horizon < 0:
        raise ConfigurationError("horizon must be >= 0")
    steps = int(round(horizon / h)) if horizon > 0 else 0
    states = euler_integrate(field, x0, t0, h, steps)
    times = t0 + h * np.arange(steps + 1)
    return times, states


# --------------------------------------------------------------------------
# Penalty loop
# --------------------------------------------------------------------------


def _interp_init(tr: Trajectory, grid) -> np.ndarray:
    nodes = grid.nodes()
    return np.stack(
        [np.interp(nodes, tr.times, tr.values[:, c]) for c in range(tr.dim)], axis=1
    )


def _data_loss(latents, obs):
    total = 0.0
    for z, (nodes, values, weights) in zip(latents, obs):
        r = values - z[nodes]
        total += float(np.sum(weights * np.einsum("jd,jd->j", r, r)))
    return total / len(latents)


def _constraint_residual(latents, grids, field) -> float:
    total = 0.0
    for z, grid in zip(latents, grids):
        if grid.k == 0:
            continue
        times = None if field.autonomous else grid.nodes()[:-1]
        r = z[1:] - z[:-1] - grid.h * field.eval_many(z[:-1], times)
        total += float(np.sum(r * r)) / grid.k
    return total / len(latents)


def penalty_fit(dataset: Dataset, config: SolverConfig, threads: int = 1) -> FitResult:
    """Algorithm: alternate banded z-steps and the pooled f-step under the
    geometric gamma schedule, stopping at max_iters or when the relative
    field change drops below early_stop_eps.

    ``threads`` parallelizes the mutually independent per-trajectory
    z-steps; 1 is the deterministic reference. BLAS pools are pinned to one
    thread throughout: the solver's matrices are small enough that threaded
    kernels only add synchronization cost, and fixed reduction order keeps
    reruns bitwise identical.
    """
    if threads < 1:
        raise ConfigurationError("threads must be >= 1")
    with threadpool_limits(limits=1):
        return _penalty_fit_impl(dataset, config, threads)


def _penalty_fit_impl(dataset: Dataset, config: SolverConfig, threads: int) -> FitResult:
    grids = build_grids(dataset, config.h)
    T = float(dataset.horizon)
    obs = []
    for tr, grid in zip(dataset.trajectories, grids):
        w = sample_weights(tr, max(T, tr.times[-1]), last_floor=config.h)
        obs.append((grid.obs_index, tr.values, w))

    kernel = config.kernel
    if isinstance(kernel, FeatureMapSpec) and kernel.standardize and kernel.mean is None:
        all_y = np.vstack([tr.values for tr in dataset.trajectories])
        all_t = np.concatenate([tr.times for tr in dataset.trajectories])
        kernel = kernel.with_standardization(all_y, all_t if kernel.time_augmented else None)

    feature_path = isinstance(kernel, FeatureMapSpec)
    if not feature_path and not isinstance(kernel, MatrixKernelSpec):
        raise ConfigurationError("solver kernel must be a FeatureMapSpec or MatrixKernelSpec")

    if config.init == "gradient_matching":
        f0 = gradient_matching_init(dataset, kernel, config.lam)
    else:
        f0 = ZeroField(dataset.dim)

    fd_fallback = isinstance(kernel, MatrixKernelSpec) and kernel.scalar.family not in (
        "gaussian",
        "linear",
    )

    latents = [_interp_init(tr, grid) for tr, grid in zip(dataset.trajectories, grids)]
    f_cur = f0
    base_coef = f0.coef if feature_path and isinstance(f0, FeatureField) else None

    gamma = config.gamma0
    traces = {"data_loss": [], "constraint_residual": [], "gamma": [], "field_change": []}
    stop_reason = "max_iters"
    iterations = 0

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for _ in range(config.max_iters):
            args = [
                (latents[i], f_cur, gamma, grids[i], *obs[i])
                for i in range(len(latents))
            ]
            if pool is not None:
                latents = list(pool.map(lambda a: z_step(*a), args))
            else:
                latents = [z_step(*a) for a in args]

            if feature_path:
                f_new, res_per_traj = _f_step_features_core(
                    latents, grids, gamma, config.lam, kernel, base_coef
                )
                k_per = np.asarray([max(g.k, 1) for g in grids], dtype=float)
                residual = float(np.mean(res_per_traj / k_per))
            else:
                f_new = f_step_representer(latents, grids, gamma, config.lam, kernel, base_field=f0)
                residual = _constraint_residual(latents, grids, f_new)

            probe = np.vstack(latents)
            if probe.shape[0] > 2048:
                probe = probe[:: probe.shape[0] // 2048 + 1]
            change = field_change_norm(f_new, f_cur, probe=probe)

            traces["data_loss"].append(_data_loss(latents, obs))
            traces["constraint_residual"].append(residual)
            traces["gamma"].append(gamma)
            traces["field_change"].append(change)

            f_cur = f_new
            gamma = min(gamma * (1.0 + config.rho), config.gamma_max)
            iterations += 1
            if change < config.early_stop_eps:
                stop_reason = "early_stop"
                break
    finally:
        if pool is not None:
            pool.shutdown()

    return FitResult(
        field=f_cur,
        latents=latents,
        grids=grids,
        traces={k: np.asarray(v) for k, v in traces.items()},
        iterations_run=iterations,
        stop_reason=stop_reason,
        fd_jacobian_fallback=fd_fallback,
        init_field=f0,
    )
