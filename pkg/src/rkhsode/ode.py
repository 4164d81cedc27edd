"""Vector fields (learned and reference), Jacobians, and Euler integration.

Fields expose a small duck-typed surface used throughout the solver:
``eval_many(X, times=None) -> (n, d)``, ``jacobian_many(X, times=None) ->
(n, d, d)``, plus ``dim`` and ``autonomous``. Jacobians of non-autonomous
fields are taken with respect to the space variables only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Trajectory
from .errors import ConfigurationError, DivergenceError
from .kernels import (
    FeatureMapSpec,
    MatrixKernelSpec,
    kernel_from_json,
    kernel_to_json,
    scalar_cross,
)

__all__ = [
    "VectorField",
    "FeatureField",
    "RepresenterField",
    "AnalyticField",
    "ZeroField",
    "make_system",
    "eval_field",
    "field_jacobian",
    "euler_integrate",
    "simulate_dataset",
    "field_to_json",
    "field_from_json",
    "SYSTEM_NAMES",
]

_FD_STEP = 1e-6


class VectorField:
    """Base class; subclasses set ``dim`` and ``autonomous``."""

    dim: int
    autonomous: bool = True

    def eval_many(self, X: np.ndarray, times=None) -> np.ndarray:
        raise NotImplementedError

    def jacobian_many(self, X: np.ndarray, times=None) -> np.ndarray:
        """Space Jacobians by central finite differences; subclasses override."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d = X.shape
        J = np.empty((n, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = _FD_STEP
            J[:, :, j] = (self.eval_many(X + e, times) - self.eval_many(X - e, times)) / (
                2 * _FD_STEP
            )
        return J

    def eval_and_jacobian_many(self, X: np.ndarray, times=None):
        """(values, jacobians) in one call; subclasses fuse shared work."""
        return self.eval_many(X, times), self.jacobian_many(X, times)

    def __call__(self, x, t=None) -> np.ndarray:
        return eval_field(self, x, t)

    def _check_times(self, X, times):
        if not self.autonomous and times is None:
            raise ConfigurationError("non-autonomous field needs evaluation times")
        if self.autonomous and times is not None:
            raise ConfigurationError("autonomous field does not take times")


class ZeroField(VectorField):
    """f(x) = 0; the constant-prediction baseline."""

    def __init__(self, dim: int):
        self.dim = dim

    def eval_many(self, X, times=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.zeros_like(X)

    def jacobian_many(self, X, times=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.zeros((X.shape[0], self.dim, self.dim))


class FeatureField(VectorField):
    """Explicit-feature field f(x) = base(x) + coef^T phi(x[, t]).

    ``coef`` has shape (n_outputs, d): column c holds the feature-space
    coefficients of output coordinate c.
    """

    def __init__(self, features: FeatureMapSpec, coef: np.ndarray, base: VectorField | None = None):
        coef = np.asarray(coef, dtype=float)
        if coef.shape[0] != features.n_outputs:
            raise ConfigurationError(
                f"coef has {coef.shape[0]} rows, feature map emits {features.n_outputs}"
            )
        self.features = features
        self.coef = coef
        self.base = base
        self.dim = coef.shape[1]
        self.autonomous = not features.time_augmented

    def eval_many(self, X, times=None):
        self._check_times(X, times)
        F = self.features.features(X, times)
        out = F @ self.coef
        if self.base is not None:
            out = out + self.base.eval_many(X, times if not self.base.autonomous else None)
        return out

    def jacobian_many(self, X, times=None):
        self._check_times(X, times)
        J = np.einsum(
            "nrj,rc->ncj", self.features.feature_jacobians(X, times), self.coef
        )
        if self.base is not None:
            J = J + self.base.jacobian_many(X, times if not self.base.autonomous else None)
        return J

    def eval_and_jacobian_many(self, X, times=None):
        self._check_times(X, times)
        F, dF = self.features.features_and_jacobians(X, times)
        vals = F @ self.coef
        J = np.einsum("nrj,rc->ncj", dF, self.coef)
        if self.base is not None:
            bt = times if not self.base.autonomous else None
            bv, bj = self.base.eval_and_jacobian_many(X, bt)
            vals = vals + bv
            J = J + bj
        return vals, J


class RepresenterField(VectorField):
    """Kernel expansion f(x) = base(x) + sum_l K1(x, z_l) * A w_l.

    Analytic Jacobians are available for gaussian and linear scalar kernels;
    other families fall back to central finite differences.
    """

    def __init__(
        self,
        centers: np.ndarray,
        weights: np.ndarray,
        kernel: MatrixKernelSpec,
        base: VectorField | None = None,
    ):
        centers = np.atleast_2d(np.asarray(centers, dtype=float))
        weights = np.atleast_2d(np.asarray(weights, dtype=float))
        if centers.shape[0] != weights.shape[0]:
            raise ConfigurationError("centers and weights must have matching lengths")
        if centers.shape[1] != kernel.dim or weights.shape[1] != kernel.dim:
            raise ConfigurationError("center/weight dims must match the kernel dimension")
        self.centers = centers
        self.weights = weights
        self.kernel = kernel
        self.base = base
        self.dim = kernel.dim
        # A w_l precomputed; the mix matrix is symmetric
        self._mixed = weights @ kernel.mix

    @property
    def fd_jacobian(self) -> bool:
        return self.kernel.scalar.family not in ("gaussian", "linear")

    def eval_many(self, X, times=None):
        self._check_times(X, times)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Kc = scalar_cross(self.kernel.scalar, X, self.centers)
        out = Kc @ self._mixed
        if self.base is not None:
            out = out + self.base.eval_many(X, times if not self.base.autonomous else None)
        return out

    def jacobian_many(self, X, times=None):
        self._check_times(X, times)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        fam = self.kernel.scalar.family
        if fam == "gaussian":
            P = self.kernel.scalar.gaussian_precision(self.dim)
            Kc = scalar_cross(self.kernel.scalar, X, self.centers)
            diff = (X[:, None, :] - self.centers[None, :, :]) @ P
            # grad_x K1(x, z_l) = -K1 * P (x - z_l)
            J = -np.einsum("nl,lc,nlj->ncj", Kc, self._mixed, diff)
        elif fam == "linear":
            A = self.kernel.scalar.params.get("matrix")
            A = np.eye(self.dim) if A is None else np.asarray(A, dtype=float)
            J0 = np.einsum("lc,lj->cj", self._mixed, self.centers @ A)
            J = np.broadcast_to(J0, (X.shape[0], self.dim, self.dim)).copy()
        else:
            return super().jacobian_many(X, times)
        if self.base is not None:
            J = J + self.base.jacobian_many(X, times if not self.base.autonomous else None)
        return J

    def eval_and_jacobian_many(self, X, times=None):
        self._check_times(X, times)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kernel.scalar.family != "gaussian":
            return self.eval_many(X, times), self.jacobian_many(X, times)
        Kc = scalar_cross(self.kernel.scalar, X, self.centers)
        vals = Kc @ self._mixed
        P = self.kernel.scalar.gaussian_precision(self.dim)
        diff = (X[:, None, :] - self.centers[None, :, :]) @ P
        J = -np.einsum("nl,lc,nlj->ncj", Kc, self._mixed, diff)
        if self.base is not None:
            bt = times if not self.base.autonomous else None
            bv, bj = self.base.eval_and_jacobian_many(X, bt)
            vals = vals + bv
            J = J + bj
        return vals, J


# --------------------------------------------------------------------------
# Reference systems
# --------------------------------------------------------------------------


def _fhn(X):
    v, w = X[:, 0], X[:, 1]
    return np.stack([v - v**3 / 3.0 - w + 1.0, 0.08 * (v + 0.7 - 0.8 * w)], axis=1)


def _fhn_jac(X):
    v = X[:, 0]
    J = np.empty((X.shape[0], 2, 2))
    J[:, 0, 0] = 1.0 - v**2
    J[:, 0, 1] = -1.0
    J[:, 1, 0] = 0.08
    J[:, 1, 1] = -0.064
    return J


def _lorenz63(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    return np.stack([10.0 * (y - x), x * (28.0 - z) - y, x * y - (8.0 / 3.0) * z], axis=1)


def _lorenz63_jac(X):
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    n = X.shape[0]
    J = np.zeros((n, 3, 3))
    J[:, 0, 0] = -10.0
    J[:, 0, 1] = 10.0
    J[:, 1, 0] = 28.0 - z
    J[:, 1, 1] = -1.0
    J[:, 1, 2] = -x
    J[:, 2, 0] = y
    J[:, 2, 1] = x
    J[:, 2, 2] = -8.0 / 3.0
    return J


def _lorenz96(X, forcing):
    # dx_k = (x_{k+1} - x_{k-2}) x_{k-1} - x_k + F with cyclic indices
    xp1 = np.roll(X, -1, axis=1)
    xm1 = np.roll(X, 1, axis=1)
    xm2 = np.roll(X, 2, axis=1)
    return (xp1 - xm2) * xm1 - X + forcing


def _lorenz96_jac(X, forcing):
    n, d = X.shape
    J = np.zeros((n, d, d))
    idx = np.arange(d)
    xp1 = np.roll(X, -1, axis=1)
    xm1 = np.roll(X, 1, axis=1)
    xm2 = np.roll(X, 2, axis=1)
    J[:, idx, (idx + 1) % d] += xm1
    J[:, idx, (idx - 1) % d] += xp1 - xm2
    J[:, idx, (idx - 2) % d] += -xm1
    J[:, idx, idx] += -1.0
    return J


def _harmonic(X, t):
    # second-order y'' + 0.001 y' + 10000 y = cos t as a first-order system
    x1, x2 = X[:, 0], X[:, 1]
    return np.stack([x2, np.cos(t) - 0.001 * x2 - 10000.0 * x1], axis=1)


def _harmonic_jac(X, t):
    J = np.zeros((X.shape[0], 2, 2))
    J[:, 0, 1] = 1.0
    J[:, 1, 0] = -10000.0
    J[:, 1, 1] = -0.001
    return J


SYSTEM_NAMES = ("fhn", "lorenz63", "lorenz96", "harmonic")


class AnalyticField(VectorField):
    """Named closed-form reference system.

    ``harmonic`` is the forced oscillator y'' + 0.001 y' + 10000 y = cos t
    written as a first-order system; it is stiff, so explicit integration
    needs steps of about 1e-4 or smaller (not enforced here).
    """

    def __init__(self, name: str, dim: int | None = None, forcing: float = 8.0):
        if name not in SYSTEM_NAMES:
            raise ConfigurationError(f"unknown system {name!r}; expected one of {SYSTEM_NAMES}")
        self.name = name
        self.forcing = float(forcing)
        if name == "fhn":
            self.dim = 2
        elif name == "lorenz63":
            self.dim = 3
        elif name == "lorenz96":
            self.dim = int(dim) if dim is not None else 6
            if self.dim < 4:
                raise ConfigurationError("lorenz96 needs dim >= 4")
        else:  # harmonic
            self.dim = 2
        self.autonomous = name != "harmonic"

    def eval_many(self, X, times=None):
        self._check_times(X, times)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.name == "fhn":
            return _fhn(X)
        if self.name == "lorenz63":
            return _lorenz63(X)
        if self.name == "lorenz96":
            return _lorenz96(X, self.forcing)
        t = np.broadcast_to(np.asarray(times, dtype=float).ravel(), (X.shape[0],))
        return _harmonic(X, t)

    def jacobian_many(self, X, times=None):
        self._check_times(X, times)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.name == "fhn":
            return _fhn_jac(X)
        if self.name == "lorenz63":
            return _lorenz63_jac(X)
        if self.name == "lorenz96":
            return _lorenz96_jac(X, self.forcing)
        t = np.broadcast_to(np.asarray(times, dtype=float).ravel(), (X.shape[0],))
        return _harmonic_jac(X, t)


def make_system(name: str, dim: int | None = None, forcing: float = 8.0) -> AnalyticField:
    return AnalyticField(name, dim=dim, forcing=forcing)


# --------------------------------------------------------------------------
# Evaluation and integration
# --------------------------------------------------------------------------


def field_to_json(f: VectorField) -> dict:
    """Serialize a field (learned or reference) to a JSON-ready dict."""
    if isinstance(f, FeatureField):
        out = {
            "form": "explicit",
            "kernel": kernel_to_json(f.features),
            "coefficients": f.coef.tolist(),
        }
        if f.base is not None:
            out["base"] = field_to_json(f.base)
        return out
    if isinstance(f, RepresenterField):
        out = {
            "form": "representer",
            "kernel": kernel_to_json(f.kernel),
            "centers": f.centers.tolist(),
            "weights": f.weights.tolist(),
        }
        if f.base is not None:
            out["base"] = field_to_json(f.base)
        return out
    if isinstance(f, AnalyticField):
        return {"form": "analytic", "name": f.name, "dim": f.dim, "forcing": f.forcing}
    if isinstance(f, ZeroField):
        return {"form": "zero", "dim": f.dim}
    raise ConfigurationError(f"cannot serialize field of type {type(f).__name__}")


def field_from_json(obj: dict) -> VectorField:
    """Inverse of field_to_json."""
    form = obj.get("form")
    base = field_from_json(obj["base"]) if "base" in obj else None
    if form == "explicit":
        featmap = kernel_from_json(obj["kernel"])
        return FeatureField(featmap, np.asarray(obj["coefficients"], dtype=float), base=base)
    if form == "representer":
        kern = kernel_from_json(obj["kernel"])
        return RepresenterField(
            np.asarray(obj["centers"], dtype=float),
            np.asarray(obj["weights"], dtype=float),
            kern,
            base=base,
        )
    if form == "analytic":
        return AnalyticField(obj["name"], dim=obj.get("dim"), forcing=obj.get("forcing", 8.0))
    if form == "zero":
        return ZeroField(int(obj["dim"]))
    raise ConfigurationError(f"unknown field form {form!r}")


def eval_field(f: VectorField, x, t=None) -> np.ndarray:
    """f(x[, t]) for a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != f.dim:
        raise ConfigurationError(f"point has dim {x.shape[0]}, field expects {f.dim}")
    times = None if t is None else np.asarray([t], dtype=float)
    return f.eval_many(x[None, :], times)[0]


def field_jacobian(f: VectorField, x, t=None) -> np.ndarray:
    """Space Jacobian df/dx at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    times = None if t is None else np.asarray([t], dtype=float)
    return f.jacobian_many(x[None, :], times)[0]


def euler_integrate(f: VectorField, x0, t0: float, h: float, steps: int) -> np.ndarray:
    """Explicit Euler orbit z_{l+1} = z_l + h f(t_l, z_l); returns (steps+1, d)."""
    if h <= 0:
        raise ConfigurationError(f"step size must be positive, got {h}")
    if steps < 0:
        raise ConfigurationError("steps must be >= 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((steps + 1, x0.shape[0]))
    out[0] = x0
    # overflow to inf is how divergence manifests; detected below, not warned
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(steps):
            t = None if f.autonomous else np.asarray([t0 + l * h])
            step = f.eval_many(out[l][None, :], t)[0]
            out[l + 1] = out[l] + h * step
            if not np.all(np.isfinite(out[l + 1])):
                raise DivergenceError(f"integration diverged at step {l + 1}", step=l + 1)
    return out


def simulate_dataset(
    system: VectorField,
    initial_conditions,
    t0: float = 0.0,
    dt_obs: float = 0.1,
    n_obs: int = 201,
    integrator_substeps: int = 100,
    id_prefix: str = "traj",
) -> Dataset:
    """Noiseless dataset with observations every dt_obs, fine-Euler generated.

    Each observation interval is integrated with ``integrator_substeps``
    Euler steps of size dt_obs/substeps.
    """
    if integrator_substeps < 1:
        raise ConfigurationError("integrator_substeps must be >= 1")
    if n_obs < 1:
        raise ConfigurationError("n_obs must be >= 1")
    ics = np.atleast_2d(np.asarray(initial_conditions, dtype=float))
    h_fine = dt_obs / integrator_substeps
    times = t0 + dt_obs * np.arange(n_obs)
    # all trajectories share the step schedule, so integrate them as one batch
    state = ics.copy()
    obs = np.empty((n_obs, ics.shape[0], ics.shape[1]))
    obs[0] = state
    for l in range((n_obs - 1) * integrator_substeps):
        t = None if system.autonomous else np.full(ics.shape[0], t0 + l * h_fine)
        state = state + h_fine * system.eval_many(state, t)
        if not np.all(np.isfinite(state)):
            bad = int(np.argmin(np.isfinite(state).all(axis=1)))
            raise DivergenceError(
                f"simulation diverged at step {l + 1} (trajectory {bad})", step=l + 1
            )
        if (l + 1) % integrator_substeps == 0:
            obs[(l + 1) // integrator_substeps] = state
    trajectories = [
        Trajectory(f"{id_prefix}{i}", times.copy(), obs[:, i].copy())
        for i in range(ics.shape[0])
    ]
    return Dataset(trajectories)
