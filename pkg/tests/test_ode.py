import numpy as np
import pytest

from rkhsode.errors import ConfigurationError, DivergenceError
from rkhsode.kernels import FeatureMapSpec, MatrixKernelSpec, ScalarKernelSpec
from rkhsode.ode import (
    FeatureField,
    RepresenterField,
    VectorField,
    ZeroField,
    euler_integrate,
    eval_field,
    field_from_json,
    field_jacobian,
    field_to_json,
    make_system,
    simulate_dataset,
)


class LinearField(VectorField):
    """f(x) = M x, used as an exactly known test field."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)
        self.dim = self.M.shape[0]

    def eval_many(self, X, times=None):
        return np.atleast_2d(X) @ self.M.T

    def jacobian_many(self, X, times=None):
        X = np.atleast_2d(X)
        return np.broadcast_to(self.M, (X.shape[0], self.dim, self.dim)).copy()


# -- reference systems --------------------------------------------------------


def test_fhn_value_by_hand():
    # v - v^3/3 - w + 1 and 0.08 (v + 0.7 - 0.8 w) at the origin
    np.testing.assert_allclose(eval_field(make_system("fhn"), [0.0, 0.0]), [1.0, 0.056])


def test_lorenz63_value_by_hand():
    # 10(y-x) = 0, x(28-z)-y = 26, xy - 8z/3 = -5/3
    np.testing.assert_allclose(
        eval_field(make_system("lorenz63"), [1.0, 1.0, 1.0]), [0.0, 26.0, -5.0 / 3.0]
    )


def test_fhn_jacobian_by_hand():
    np.testing.assert_allclose(
        field_jacobian(make_system("fhn"), [0.0, 0.0]), [[1.0, -1.0], [0.08, -0.064]]
    )


def test_linear_field_jacobian_exact():
    M = np.array([[0.5, -1.0], [2.0, 0.1]])
    np.testing.assert_array_equal(field_jacobian(LinearField(M), [3.0, -2.0]), M)


def test_lorenz96_cyclic_equivariance():
    sys6 = make_system("lorenz96", dim=6, forcing=8.0)
    rng = np.random.default_rng(0)
    x = rng.normal(size=6)
    for shift in range(1, 6):
        np.testing.assert_allclose(
            np.roll(eval_field(sys6, x), shift), eval_field(sys6, np.roll(x, shift)), atol=1e-14
        )


def test_lorenz96_jacobian_matches_fd():
    sys6 = make_system("lorenz96", dim=6)
    rng = np.random.default_rng(1)
    x = rng.normal(size=6)
    J = field_jacobian(sys6, x)
    eps = 1e-6
    for j in range(6):
        e = np.zeros(6)
        e[j] = eps
        fd = (eval_field(sys6, x + e) - eval_field(sys6, x - e)) / (2 * eps)
        np.testing.assert_allclose(J[:, j], fd, atol=1e-6)


def test_harmonic_is_nonautonomous():
    sys = make_system("harmonic")
    assert not sys.autonomous
    with pytest.raises(ConfigurationError):
        eval_field(sys, [0.0, 0.0])
    val = eval_field(sys, [0.0, 0.0], t=0.0)
    np.testing.assert_allclose(val, [0.0, 1.0])  # cos(0) forcing
    # stiffness: second component dominated by -10000 x1
    val2 = eval_field(sys, [1.0, 0.0], t=np.pi / 2)
    assert val2[1] == pytest.approx(-10000.0, abs=1e-9)


def test_zero_field():
    z = ZeroField(3)
    np.testing.assert_array_equal(eval_field(z, [1.0, 2.0, 3.0]), np.zeros(3))


# -- learned field forms -------------------------------------------------------


def test_representer_zero_weights_is_base():
    kern = MatrixKernelSpec(ScalarKernelSpec("gaussian", {"bandwidth": 1.0}), np.eye(2))
    f = RepresenterField(np.zeros((3, 2)), np.zeros((3, 2)), kern)
    np.testing.assert_array_equal(eval_field(f, [1.0, -1.0]), np.zeros(2))


@pytest.fixture
def random_feature_field():
    spec = FeatureMapSpec(n_features=24, input_dim=2, lengthscales=(0.8, 1.2), seed=3)
    rng = np.random.default_rng(5)
    return FeatureField(spec, rng.normal(size=(spec.n_outputs, 2)))


@pytest.fixture
def random_representer_field():
    kern = MatrixKernelSpec(ScalarKernelSpec("gaussian", {"bandwidth": 0.9}), np.eye(2))
    rng = np.random.default_rng(6)
    return RepresenterField(rng.normal(size=(6, 2)), rng.normal(size=(6, 2)), kern)


@pytest.mark.parametrize("which", ["features", "representer"])
def test_jacobians_match_finite_differences(which, random_feature_field, random_representer_field):
    f = random_feature_field if which == "features" else random_representer_field
    rng = np.random.default_rng(7)
    X = rng.normal(size=(100, 2))
    J = f.jacobian_many(X)
    eps = 1e-6
    worst = 0.0
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd = (f.eval_many(X + e) - f.eval_many(X - e)) / (2 * eps)
        scale = np.maximum(np.abs(J[:, :, j]), 1.0)
        worst = max(worst, np.max(np.abs(J[:, :, j] - fd) / scale))
    assert worst <= 1e-5


def test_eval_and_jacobian_fused_matches_separate(random_feature_field, random_representer_field):
    rng = np.random.default_rng(8)
    X = rng.normal(size=(10, 2))
    for f in (random_feature_field, random_representer_field):
        v, J = f.eval_and_jacobian_many(X)
        np.testing.assert_allclose(v, f.eval_many(X), atol=1e-14)
        np.testing.assert_allclose(J, f.jacobian_many(X), atol=1e-14)


def test_representer_linear_kernel_jacobian():
    kern = MatrixKernelSpec(ScalarKernelSpec("linear"), np.eye(2))
    rng = np.random.default_rng(9)
    f = RepresenterField(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), kern)
    X = rng.normal(size=(5, 2))
    J = f.jacobian_many(X)
    eps = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd = (f.eval_many(X + e) - f.eval_many(X - e)) / (2 * eps)
        np.testing.assert_allclose(J[:, :, j], fd, atol=1e-6)


def test_nonautonomous_feature_field_needs_time():
    spec = FeatureMapSpec(
        n_features=8, input_dim=1, lengthscales=(1.0, 1.0), seed=1, time_augmented=True
    )
    f = FeatureField(spec, np.ones((8, 1)))
    assert not f.autonomous
    with pytest.raises(ConfigurationError):
        f.eval_many(np.zeros((1, 1)))
    assert f.eval_many(np.zeros((1, 1)), times=[1.0]).shape == (1, 1)


# -- Euler integration ---------------------------------------------------------


def test_euler_constant_field_exact():
    class Const(VectorField):
        dim = 2

        def eval_many(self, X, times=None):
            return np.broadcast_to([1.0, -2.0], (np.atleast_2d(X).shape[0], 2)).copy()

    orbit = euler_integrate(Const(), [0.0, 0.0], 0.0, 0.1, 10)
    np.testing.assert_allclose(orbit[-1], [1.0, -2.0], atol=1e-12)
    np.testing.assert_allclose(orbit[5], [0.5, -1.0], atol=1e-12)


def test_euler_compound_growth():
    f = LinearField([[1.0]])
    orbit = euler_integrate(f, [1.0], 0.0, 0.1, 10)
    assert orbit[-1, 0] == pytest.approx(1.1**10, rel=1e-12)


def test_euler_zero_steps():
    orbit = euler_integrate(LinearField([[1.0]]), [3.0], 0.0, 0.1, 0)
    np.testing.assert_array_equal(orbit, [[3.0]])


def test_euler_divergence_reports_step():
    f = LinearField([[50.0]])  # e^{50t}: overflows quickly at h=1
    with pytest.raises(DivergenceError) as err:
        euler_integrate(f, [1.0], 0.0, 1.0, 10_000)
    assert err.value.step is not None


def test_euler_first_order_convergence():
    # error at t=1 versus a near-exact reference halves with the step
    ref = euler_integrate(make_system("fhn"), [0.0, 0.0], 0.0, 1e-5, 100_000)[-1]
    e1 = np.linalg.norm(euler_integrate(make_system("fhn"), [0.0, 0.0], 0.0, 1e-2, 100)[-1] - ref)
    e2 = np.linalg.norm(euler_integrate(make_system("fhn"), [0.0, 0.0], 0.0, 5e-3, 200)[-1] - ref)
    assert 0.4 <= e2 / e1 <= 0.6


# -- simulation -----------------------------------------------------------------


def test_simulate_topology():
    ds = simulate_dataset(make_system("fhn"), [[0.1, 0.1], [1.0, -1.0]], 0.0, 0.1, 201, 10)
    assert ds.n_trajectories == 2
    assert ds.trajectories[0].n_obs == 201
    np.testing.assert_allclose(np.diff(ds.trajectories[0].times), 0.1)
    assert ds.trajectories[0].times[-1] == pytest.approx(20.0)


def test_simulate_single_observation():
    ds = simulate_dataset(make_system("fhn"), [[0.3, 0.4]], 0.0, 0.1, 1, 10)
    np.testing.assert_allclose(ds.trajectories[0].values, [[0.3, 0.4]])


def test_simulate_substeps_converge():
    coarse = simulate_dataset(make_system("fhn"), [[0.0, 0.0]], 0.0, 0.5, 5, 1)
    fine = simulate_dataset(make_system("fhn"), [[0.0, 0.0]], 0.0, 0.5, 5, 1000)
    gap = np.abs(coarse.trajectories[0].values - fine.trajectories[0].values).max()
    assert 0.001 < gap < 1.0  # coarse Euler differs but does not blow up


# -- serialization --------------------------------------------------------------


def test_field_json_round_trip(random_feature_field, random_representer_field):
    rng = np.random.default_rng(11)
    X = rng.normal(size=(7, 2))
    for f in (random_feature_field, random_representer_field):
        back = field_from_json(field_to_json(f))
        np.testing.assert_allclose(back.eval_many(X), f.eval_many(X), atol=1e-14)


def test_field_json_analytic_and_zero():
    for f in (make_system("lorenz96", dim=5, forcing=7.0), ZeroField(4)):
        back = field_from_json(field_to_json(f))
        assert back.dim == f.dim
    back = field_from_json(field_to_json(make_system("lorenz96", dim=5, forcing=7.0)))
    assert back.forcing == 7.0


def test_field_json_with_base():
    kern = MatrixKernelSpec(ScalarKernelSpec("gaussian", {"bandwidth": 1.0}), np.eye(2))
    rng = np.random.default_rng(13)
    base = RepresenterField(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)), kern)
    f = RepresenterField(rng.normal(size=(4, 2)), rng.normal(size=(4, 2)), kern, base=base)
    back = field_from_json(field_to_json(f))
    X = rng.normal(size=(6, 2))
    np.testing.assert_allclose(back.eval_many(X), f.eval_many(X), atol=1e-13)
