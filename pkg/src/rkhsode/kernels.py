"""Scalar, separable matrix-valued, and explicit random-feature kernels.

A scalar kernel together with a PSD mixing matrix ``A`` yields the separable
matrix-valued kernel ``K(x, y) = K1(x, y) * A`` used to model vector fields.
Random Fourier feature maps provide the explicit-kernel alternative
``K(u, v) = phi(u)^T phi(v) * I`` whose coordinates live in a
finite-dimensional feature space.

The module also ships the squared kernel metric

    d2_ii(u, v) = K_ii(u, u) - 2 K_ii(u, v) + K_ii(v, v)

and an empirical regularity checker: a kernel whose metric grows at most
linearly in |u - v| produces vector fields with unique, globally defined
flows, so the checker classifies kernel families by sampling the ratio
d_ii(u, v) / |u - v| over boxes of increasing radius and over shrinking
pair separations.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "ScalarKernelSpec",
    "MatrixKernelSpec",
    "FeatureMapSpec",
    "LipschitzReport",
    "scalar_eval",
    "scalar_cross",
    "matrix_eval",
    "kernel_metric_sq",
    "check_lipschitz",
    "gram",
    "feature_map",
    "kernel_to_json",
    "kernel_from_json",
]

SCALAR_FAMILIES = (
    "linear",
    "gaussian",
    "rational_quadratic",
    "sinc",
    "matern",
    "laplacian",
    "polynomial",
)

# Matern half-integer orders with closed forms.
_MATERN_ORDERS = (0.5, 1.5, 2.5, 3.5)


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {m.shape}")
    return m


def _check_psd(m: np.ndarray, name: str) -> np.ndarray:
    if not np.allclose(m, m.T, atol=1e-10):
        raise ConfigurationError(f"{name} must be symmetric")
    w = np.linalg.eigvalsh(m)
    if w[0] < -1e-10 * max(w[-1], 1.0):
        raise ConfigurationError(f"{name} must be positive semidefinite (min eig {w[0]:.3e})")
    return m


@dataclass(frozen=True)
class ScalarKernelSpec:
    """A scalar kernel K1 identified by family name and parameters.

    Parameters are family specific:

    * ``gaussian`` -- one of ``matrix`` (PSD precision matrix), ``lengthscales``
      (per-coordinate, precision = diag(1/l^2)) or ``bandwidth`` (isotropic).
    * ``linear`` -- optional PSD ``matrix`` (defaults to the identity).
    * ``rational_quadratic`` -- ``theta`` > 0.
    * ``sinc`` -- ``lengthscale`` > 0 (the limit at coincident coordinates is 1).
    * ``matern`` -- half-integer order ``p`` and ``lengthscale``.
    * ``laplacian`` -- ``lengthscale`` > 0.
    * ``polynomial`` -- integer ``degree`` >= 1 and ``offset`` >= 0.
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in SCALAR_FAMILIES:
            raise ConfigurationError(
                f"unknown kernel family {self.family!r}; expected one of {SCALAR_FAMILIES}"
            )
        p = dict(self.params)
        if self.family == "gaussian":
            given = [k for k in ("matrix", "lengthscales", "bandwidth") if k in p]
            if len(given) > 1:
                raise ConfigurationError("gaussian kernel takes only one of matrix/lengthscales/bandwidth")
            if "matrix" in p:
                _check_psd(_as_matrix(p["matrix"]), "gaussian matrix")
            elif "lengthscales" in p:
                ls = np.asarray(p["lengthscales"], dtype=float)
                if ls.ndim != 1 or np.any(ls <= 0):
                    raise ConfigurationError("gaussian lengthscales must be positive")
            elif np.asarray(p.get("bandwidth", 1.0), dtype=float) <= 0:
                raise ConfigurationError("gaussian bandwidth must be positive")
        elif self.family == "linear":
            if "matrix" in p:
                _check_psd(_as_matrix(p["matrix"]), "linear matrix")
        elif self.family == "rational_quadratic":
            if float(p.get("theta", 1.0)) <= 0:
                raise ConfigurationError("rational_quadratic theta must be > 0")
        elif self.family in ("sinc", "laplacian"):
            if float(p.get("lengthscale", 1.0)) <= 0:
                raise ConfigurationError(f"{self.family} lengthscale must be > 0")
        elif self.family == "matern":
            order = float(p.get("p", 2.5))
            if order not in _MATERN_ORDERS:
                raise ConfigurationError(
                    f"matern order p={order} unsupported; closed forms exist for {_MATERN_ORDERS}"
                )
            if float(p.get("lengthscale", 1.0)) <= 0:
                raise ConfigurationError("matern lengthscale must be > 0")
        elif self.family == "polynomial":
            deg = p.get("degree", 2)
            if int(deg) != deg or int(deg) < 1:
                raise ConfigurationError("polynomial degree must be an integer >= 1")
            if float(p.get("offset", 1.0)) < 0:
                raise ConfigurationError("polynomial offset must be >= 0")

    def gaussian_precision(self, dim: int) -> np.ndarray:
        """The quadratic-form matrix of a gaussian kernel for inputs of width dim."""
        p = self.params
        if "matrix" in p:
            m = _as_matrix(p["matrix"])
            if m.shape[0] != dim:
                raise ConfigurationError(f"gaussian matrix is {m.shape[0]}x{m.shape[0]}, input dim is {dim}")
            return m
        if "lengthscales" in p:
            ls = np.asarray(p["lengthscales"], dtype=float)
            if ls.shape[0] != dim:
                raise ConfigurationError(f"gaussian has {ls.shape[0]} lengthscales, input dim is {dim}")
            return np.diag(1.0 / ls**2)
        bw = float(p.get("bandwidth", 1.0))
        return np.eye(dim) / bw**2


@dataclass(frozen=True)
class MatrixKernelSpec:
    """Separable matrix-valued kernel K(x, y) = K1(x, y) * A with A PSD."""

    scalar: ScalarKernelSpec
    mix: np.ndarray

    def __post_init__(self):
        m = _check_psd(_as_matrix(self.mix), "mix")
        object.__setattr__(self, "mix", m)

    @property
    def dim(self) -> int:
        return self.mix.shape[0]


def _sqdist(X: np.ndarray, Y: np.ndarray, M: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared distances (x-y)^T M (x-y); euclidean when M is None."""
    if M is None:
        qx = np.einsum("ij,ij->i", X, X)
        qy = np.einsum("ij,ij->i", Y, Y)
        cross = X @ Y.T
    else:
        XM = X @ M
        qx = np.einsum("ij,ij->i", XM, X)
        qy = np.einsum("ij,ij->i", Y @ M, Y)
        cross = XM @ Y.T
    d2 = qx[:, None] + qy[None, :] - 2.0 * cross
    return np.maximum(d2, 0.0)


def _sinc(x: np.ndarray) -> np.ndarray:
    # sin(x)/x with the removable singularity filled by 1.
    out = np.ones_like(x)
    nz = np.abs(x) > 1e-300
    out[nz] = np.sin(x[nz]) / x[nz]
    return out


def _matern_value(r: np.ndarray, order: float, ell: float) -> np.ndarray:
    s = r / ell
    if order == 0.5:
        return np.exp(-s)
    if order == 1.5:
        a = math.sqrt(3.0) * s
        return (1.0 + a) * np.exp(-a)
    if order == 2.5:
        a = math.sqrt(5.0) * s
        return (1.0 + a + a**2 / 3.0) * np.exp(-a)
    if order == 3.5:
        a = math.sqrt(7.0) * s
        return (1.0 + a + 2.0 * a**2 / 5.0 + a**3 / 15.0) * np.exp(-a)
    raise ConfigurationError(f"unsupported matern order {order}")


def scalar_cross(spec: ScalarKernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Cross Gram matrix K1(X, Y) of shape (len(X), len(Y))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ConfigurationError(f"point dims differ: {X.shape[1]} vs {Y.shape[1]}")
    fam, p = spec.family, spec.params
    if fam == "linear":
        A = _as_matrix(p["matrix"]) if "matrix" in p else np.eye(X.shape[1])
        return X @ A @ Y.T
    if fam == "gaussian":
        P = spec.gaussian_precision(X.shape[1])
        return np.exp(-0.5 * _sqdist(X, Y, P))
    if fam == "rational_quadratic":
        theta = float(p.get("theta", 1.0))
        return theta / (_sqdist(X, Y) + theta)
    if fam == "sinc":
        ell = float(p.get("lengthscale", 1.0))
        diffs = np.abs(X[:, None, :] - Y[None, :, :]) / ell
        return np.prod(_sinc(diffs), axis=2)
    if fam == "matern":
        return _matern_value(
            np.sqrt(_sqdist(X, Y)), float(p.get("p", 2.5)), float(p.get("lengthscale", 1.0))
        )
    if fam == "laplacian":
        ell = float(p.get("lengthscale", 1.0))
        return np.exp(-np.sqrt(_sqdist(X, Y)) / ell)
    if fam == "polynomial":
        deg = int(p.get("degree", 2))
        off = float(p.get("offset", 1.0))
        return (X @ Y.T + off) ** deg
    raise ConfigurationError(f"unknown family {fam}")


def scalar_eval(spec: ScalarKernelSpec, u, v) -> float:
    """K1(u, v) for two points."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ConfigurationError("kernel inputs must be finite")
    return float(scalar_cross(spec, u[None, :], v[None, :])[0, 0])


def matrix_eval(spec: MatrixKernelSpec, u, v) -> np.ndarray:
    """K(u, v) = K1(u, v) * A, a (d, d) matrix."""
    return scalar_eval(spec.scalar, u, v) * spec.mix


def kernel_metric_sq(spec, u, v, i: int = 0) -> float:
    """Squared kernel metric K_ii(u,u) - 2 K_ii(u,v) + K_ii(v,v), clamped at 0.

    Accepts a scalar spec (i ignored), a separable matrix spec (diagonal
    entry i), or a feature-map spec (all diagonal entries coincide).
    """
    if isinstance(spec, FeatureMapSpec):
        pu = feature_map(spec, u)
        pv = feature_map(spec, v)
        val = float(np.sum((pu - pv) ** 2))
        return 0.0 if val < 1e-12 else val
    if isinstance(spec, MatrixKernelSpec):
        scale = float(spec.mix[i, i])
        scalar = spec.scalar
    else:
        scale = 1.0
        scalar = spec
    val = scale * (
        scalar_eval(scalar, u, u) - 2.0 * scalar_eval(scalar, u, v) + scalar_eval(scalar, v, v)
    )
    return 0.0 if val < 1e-12 else val


def gram(spec, points: np.ndarray) -> np.ndarray:
    """Block Gram matrix over a list of points.

    For a separable matrix kernel the (a, b) block is K1(x_a, x_b) * A and the
    result is kron(G1, A). A feature map is treated as the separable kernel
    phi(u).phi(v) * I. A bare scalar spec returns the plain scalar Gram.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] < 1:
        raise ConfigurationError("gram needs at least one point")
    if isinstance(spec, FeatureMapSpec):
        F = spec.features(pts)
        return np.kron(F @ F.T, np.eye(spec.input_dim))
    if isinstance(spec, MatrixKernelSpec):
        return np.kron(scalar_cross(spec.scalar, pts, pts), spec.mix)
    return scalar_cross(spec, pts, pts)


# --------------------------------------------------------------------------
# Explicit random Fourier features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureMapSpec:
    """Random Fourier feature map phi: R^d (x time) -> R^{n_features}.

    Frequencies are drawn once from a standard Normal scaled by the
    lengthscales, in cos/sin pairs, so that phi(u).phi(v) is a Monte-Carlo
    estimate of the gaussian kernel with the same lengthscales. The map is a
    deterministic function of (seed, lengthscales, n_features).

    ``with_standardization`` returns a copy whose features are centered and
    scaled using statistics of the supplied training points; the identity
    K(u, v) = phi(u).phi(v) then defines the (standardized) explicit kernel.
    """

    n_features: int
    input_dim: int
    lengthscales: tuple
    seed: int = 0
    time_augmented: bool = False
    include_constant: bool = False
    standardize: bool = False
    mean: tuple | None = None
    scale: tuple | None = None

    def __post_init__(self):
        if self.n_features < 2 or self.n_features % 2 != 0:
            raise ConfigurationError("n_features must be an even integer >= 2")
        if self.input_dim < 1:
            raise ConfigurationError("input_dim must be >= 1")
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        want = self.total_input_dim
        if ls.size == 1:
            ls = np.full(want, ls[0])
        if ls.size != want:
            raise ConfigurationError(
                f"lengthscales must have {want} entries (input_dim"
                f"{' + time' if self.time_augmented else ''}), got {ls.size}"
            )
        if np.any(ls <= 0):
            raise ConfigurationError("lengthscales must be positive")
        object.__setattr__(self, "lengthscales", tuple(ls))

    @property
    def total_input_dim(self) -> int:
        return self.input_dim + (1 if self.time_augmented else 0)

    @property
    def n_outputs(self) -> int:
        """Total feature count including the optional constant feature."""
        return self.n_features + (1 if self.include_constant else 0)

    @cached_property
    def frequencies(self) -> np.ndarray:
        """(n_features, total_input_dim) frequency matrix; rows come in cos/sin pairs."""
        rng = np.random.default_rng(self.seed)
        half = rng.standard_normal((self.n_features // 2, self.total_input_dim))
        half = half / np.asarray(self.lengthscales)[None, :]
        return np.repeat(half, 2, axis=0)

    @cached_property
    def phases(self) -> np.ndarray:
        """Per-feature phase offsets: 0 for cosine rows, -pi/2 for sine rows."""
        ph = np.zeros(self.n_features)
        ph[1::2] = -0.5 * np.pi
        return ph

    def _augment(self, X: np.ndarray, times) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise ConfigurationError(f"points have dim {X.shape[1]}, feature map expects {self.input_dim}")
        if self.time_augmented:
            if times is None:
                raise ConfigurationError("time-augmented feature map requires times")
            t = np.broadcast_to(np.asarray(times, dtype=float).ravel(), (X.shape[0],))
            return np.hstack([X, t[:, None]])
        if times is not None:
            raise ConfigurationError("feature map is autonomous; got unexpected times")
        return X

    def features(self, X: np.ndarray, times=None) -> np.ndarray:
        """Feature matrix of shape (n_points, n_outputs)."""
        Z = self._augment(X, times)
        amp = math.sqrt(2.0 / self.n_features)
        F = amp * np.cos(Z @ self.frequencies.T + self.phases[None, :])
        if self.include_constant:
            F = np.hstack([F, np.ones((F.shape[0], 1))])
        if self.mean is not None:
            F = (F - np.asarray(self.mean)[None, :]) / np.asarray(self.scale)[None, :]
        return F

    def feature_jacobians(self, X: np.ndarray, times=None) -> np.ndarray:
        """d phi / dx of shape (n_points, n_outputs, input_dim); space only."""
        Z = self._augment(X, times)
        amp = math.sqrt(2.0 / self.n_features)
        S = -amp * np.sin(Z @ self.frequencies.T + self.phases[None, :])
        return self._finish_jacobians(S)

    def _finish_jacobians(self, S: np.ndarray) -> np.ndarray:
        W = self.frequencies[:, : self.input_dim]
        J = S[:, :, None] * W[None, :, :]
        if self.include_constant:
            J = np.concatenate([J, np.zeros((J.shape[0], 1, self.input_dim))], axis=1)
        if self.scale is not None:
            J = J / np.asarray(self.scale)[None, :, None]
        return J

    def features_and_jacobians(self, X: np.ndarray, times=None):
        """(features, jacobians) sharing one evaluation of the trig arguments."""
        Z = self._augment(X, times)
        amp = math.sqrt(2.0 / self.n_features)
        arg = Z @ self.frequencies.T + self.phases[None, :]
        F = amp * np.cos(arg)
        S = -amp * np.sin(arg)
        if self.include_constant:
            F = np.hstack([F, np.ones((F.shape[0], 1))])
        if self.mean is not None:
            F = (F - np.asarray(self.mean)[None, :]) / np.asarray(self.scale)[None, :]
        return F, self._finish_jacobians(S)

    def with_standardization(self, X: np.ndarray, times=None) -> "FeatureMapSpec":
        """Copy with per-feature mean/scale fitted on the given training points."""
        raw = dataclasses.replace(self, mean=None, scale=None)
        F = raw.features(X, times)
        mu = F.mean(axis=0)
        sd = F.std(axis=0)
        sd = np.where(sd < 1e-12, 1.0, sd)
        return dataclasses.replace(self, mean=tuple(mu), scale=tuple(sd))


def feature_map(spec: FeatureMapSpec, x, t=None) -> np.ndarray:
    """Feature vector phi(x[, t]) for a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    times = None if t is None else np.asarray([t], dtype=float)
    return spec.features(x[None, :], times)[0]


# --------------------------------------------------------------------------
# Empirical regularity checker
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzReport:
    """Outcome of the empirical kernel-regularity check."""

    kernel: object
    n_pairs: int
    max_ratio: float
    ratio_trend: float       # log2 slope of per-box max ratio vs box radius
    local_trend: float       # log2 slope of max ratio vs shrinking separation
    verdict: str             # "pass" | "fail"
    flagged_family: bool = False  # analytic classification overrode sampling

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


# Growth above 10% per doubling counts as unbounded.
_TREND_TOL = math.log2(1.1)


def _metric_ratios(spec, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """max_i d_{K_ii}(u, v) / |u - v| for each sampled pair."""
    if isinstance(spec, MatrixKernelSpec):
        diag = np.diag(spec.mix)
        scalar = spec.scalar
    elif isinstance(spec, FeatureMapSpec):
        FU = spec.features(U)
        FV = spec.features(V)
        d = np.sqrt(np.maximum(np.sum((FU - FV) ** 2, axis=1), 0.0))
        sep = np.linalg.norm(U - V, axis=1)
        return d / sep
    else:
        diag = np.ones(1)
        scalar = spec
    kuu = np.einsum("ii->i", scalar_cross(scalar, U, U))
    kvv = np.einsum("ii->i", scalar_cross(scalar, V, V))
    kuv = np.einsum("ii->i", scalar_cross(scalar, U, V))
    d2 = np.maximum(kuu - 2.0 * kuv + kvv, 0.0)
    sep = np.linalg.norm(U - V, axis=1)
    return np.sqrt(d2 * diag.max()) / sep


def check_lipschitz(
    spec,
    sample_boxes=(1.0, 2.0, 4.0, 8.0),
    n_pairs: int = 400,
    seed: int = 0,
    dim: int = 2,
) -> LipschitzReport:
    """Empirical test of the linear-growth condition on the kernel metric.

    Two sampled trends must both stay bounded for a pass verdict:

    * across boxes of increasing radius (catches polynomial-type growth
      of d(u, v)/|u - v| at large separations), and
    * across geometrically shrinking pair separations inside the first box
      (catches Hoelder-type blowup at vanishing separation, e.g. laplacian).

    Matern kernels with order p <= 3/2 are additionally flagged as failing
    by family, following the analytic classification.
    """
    if n_pairs < 100:
        raise ConfigurationError("n_pairs must be >= 100")
    if isinstance(spec, FeatureMapSpec):
        dim = spec.input_dim
    rng = np.random.default_rng(seed)
    radii = np.asarray(sample_boxes, dtype=float)
    if radii.size < 2 or np.any(np.diff(radii) <= 0):
        raise ConfigurationError("sample_boxes must be an increasing list of radii")

    box_max = []
    for r in radii:
        U = rng.uniform(-r, r, size=(n_pairs, dim))
        V = rng.uniform(-r, r, size=(n_pairs, dim))
        keep = np.linalg.norm(U - V, axis=1) > 1e-12
        box_max.append(float(np.max(_metric_ratios(spec, U[keep], V[keep]))))
    box_max = np.asarray(box_max)
    ratio_trend = float(np.polyfit(np.log2(radii), np.log2(box_max), 1)[0])

    # Shrinking-separation ladder anchored in the smallest box.
    r0 = radii[0]
    anchors = rng.uniform(-r0, r0, size=(64, dim))
    dirs = rng.standard_normal((64, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    deltas = r0 * 2.0 ** -np.arange(0, 13)
    ladder_max = np.asarray(
        [float(np.max(_metric_ratios(spec, anchors, anchors + d * dirs))) for d in deltas]
    )
    local_trend = float(np.polyfit(-np.log2(deltas), np.log2(np.maximum(ladder_max, 1e-300)), 1)[0])

    flagged = False
    scalar = spec.scalar if isinstance(spec, MatrixKernelSpec) else spec
    if isinstance(scalar, ScalarKernelSpec) and scalar.family == "matern":
        flagged = float(scalar.params.get("p", 2.5)) <= 1.5

    bounded = ratio_trend <= _TREND_TOL and local_trend <= _TREND_TOL
    verdict = "pass" if (bounded and not flagged) else "fail"
    return LipschitzReport(
        kernel=spec,
        n_pairs=int(n_pairs),
        max_ratio=float(max(box_max.max(), ladder_max.max())),
        ratio_trend=ratio_trend,
        local_trend=local_trend,
        verdict=verdict,
        flagged_family=flagged,
    )


# --------------------------------------------------------------------------
# JSON serialization
# --------------------------------------------------------------------------


def kernel_to_json(spec) -> dict:
    """Serialize any kernel spec to the canonical JSON object."""
    if isinstance(spec, FeatureMapSpec):
        params = {
            "input_dim": spec.input_dim,
            "lengthscales": list(spec.lengthscales),
            "time_augmented": spec.time_augmented,
            "include_constant": spec.include_constant,
            "standardize": spec.standardize,
        }
        if spec.mean is not None:
            params["mean"] = list(spec.mean)
            params["scale"] = list(spec.scale)
        return {
            "family": "fourier_features",
            "params": params,
            "n_features": spec.n_features,
            "seed": spec.seed,
        }
    if isinstance(spec, MatrixKernelSpec):
        return {
            "family": spec.scalar.family,
            "params": _jsonable_params(spec.scalar.params),
            "mix": spec.mix.tolist(),
        }
    if isinstance(spec, ScalarKernelSpec):
        return {"family": spec.family, "params": _jsonable_params(spec.params)}
    raise ConfigurationError(f"cannot serialize kernel of type {type(spec).__name__}")


def _jsonable_params(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        arr = np.asarray(v)
        out[k] = arr.tolist() if arr.ndim > 0 else (v if isinstance(v, (int, bool)) else float(arr))
    return out


def kernel_from_json(obj: dict):
    """Inverse of kernel_to_json."""
    if "family" not in obj:
        raise ConfigurationError("kernel JSON needs a 'family' key")
    fam = obj["family"]
    params = dict(obj.get("params", {}))
    if fam == "fourier_features":
        mean = params.pop("mean", None)
        scale = params.pop("scale", None)
        return FeatureMapSpec(
            n_features=int(obj["n_features"]),
            input_dim=int(params["input_dim"]),
            lengthscales=tuple(np.atleast_1d(params["lengthscales"]).tolist()),
            seed=int(obj.get("seed", 0)),
            time_augmented=bool(params.get("time_augmented", False)),
            include_constant=bool(params.get("include_constant", False)),
            standardize=bool(params.get("standardize", False)),
            mean=None if mean is None else tuple(mean),
            scale=None if scale is None else tuple(scale),
        )
    scalar = ScalarKernelSpec(family=fam, params=params)
    if "mix" in obj and obj["mix"] is not None:
        return MatrixKernelSpec(scalar=scalar, mix=np.asarray(obj["mix"], dtype=float))
    return scalar
