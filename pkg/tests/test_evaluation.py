import numpy as np
import pytest

from rkhsode.data import Dataset, Trajectory
from rkhsode.errors import ConfigurationError
from rkhsode.evaluation import (
    constraint_residual,
    convergence_experiment,
    default_protocol,
    err_metric,
    evaluate_on_test,
    l2_sq_distance,
    noise_sweep,
    predict_at_times,
)
from rkhsode.ode import FeatureField, ZeroField, euler_integrate
from rkhsode.kernels import FeatureMapSpec
from dataclasses import replace


# -- Err metric ---------------------------------------------------------------


def test_err_zero_for_identical():
    t = np.linspace(0, 1, 5)
    y = np.random.default_rng(0).normal(size=(5, 2))
    assert err_metric(t, y, y) == 0.0


def test_err_single_gap_by_hand():
    # sqrt( (t2 - t1) * |y2 - yhat2|^2 ) = sqrt(1 * 9) = 3
    assert err_metric([0.0, 1.0], [[0.0], [3.0]], [[0.0], [0.0]]) == pytest.approx(3.0)


def test_err_scales_sqrt_with_time_gaps():
    rng = np.random.default_rng(1)
    y = rng.normal(size=(6, 2))
    p = rng.normal(size=(6, 2))
    t = np.linspace(0, 1, 6)
    assert err_metric(2 * t, p, y) == pytest.approx(np.sqrt(2) * err_metric(t, p, y))


def test_err_homogeneous_in_residuals():
    t = np.linspace(0, 1, 4)
    y = np.zeros((4, 1))
    p = np.array([[0.0], [1.0], [2.0], [1.0]])
    assert err_metric(t, 3 * p, y) == pytest.approx(3 * err_metric(t, p, y))


def test_err_requires_matching_shapes():
    with pytest.raises(ConfigurationError):
        err_metric([0.0, 1.0], [[0.0]], [[0.0], [1.0]])


# -- L2 distance ----------------------------------------------------------------


def test_l2_identical_curves():
    t = np.linspace(0, 2, 9)
    x = np.sin(t)[:, None]
    assert l2_sq_distance(t, x, t, x) == 0.0


def test_l2_constant_difference():
    ta = np.array([0.0, 2.0])
    tb = np.linspace(0, 2, 7)
    assert l2_sq_distance(ta, np.ones((2, 1)), tb, np.zeros((7, 1))) == pytest.approx(2.0)


def test_l2_linear_ramp_exact_third():
    # integral of t^2 over [0, 1]; exact for the per-segment quadratic rule
    ta = np.array([0.0, 1.0])
    assert l2_sq_distance(ta, ta[:, None], [0.0, 1.0], np.zeros((2, 1))) == pytest.approx(
        1.0 / 3.0, abs=1e-12
    )


def test_l2_matches_closed_form_piecewise():
    # |a - b| is piecewise linear; compare against dense trapezoid quadrature
    rng = np.random.default_rng(5)
    ta = np.sort(np.concatenate([[0.0, 3.0], rng.uniform(0, 3, 6)]))
    tb = np.sort(np.concatenate([[0.0, 3.0], rng.uniform(0, 3, 9)]))
    va = rng.normal(size=(len(ta), 2))
    vb = rng.normal(size=(len(tb), 2))
    got = l2_sq_distance(ta, va, tb, vb)
    tt = np.linspace(0, 3, 500_001)
    fa = np.stack([np.interp(tt, ta, va[:, c]) for c in range(2)], axis=1)
    fb = np.stack([np.interp(tt, tb, vb[:, c]) for c in range(2)], axis=1)
    ref = np.trapezoid(np.sum((fa - fb) ** 2, axis=1), tt)
    assert got == pytest.approx(ref, abs=1e-6)


def test_l2_coverage_gap_rejected():
    with pytest.raises(ConfigurationError):
        l2_sq_distance([0.0, 1.0], np.zeros((2, 1)), [0.0, 0.5], np.zeros((2, 1)), t_hi=1.0)


# -- constraint residual -----------------------------------------------------------


def test_constraint_residual_exact_euler_orbit():
    spec = FeatureMapSpec(n_features=16, input_dim=2, lengthscales=(1.0, 1.0), seed=4)
    f = FeatureField(spec, np.random.default_rng(2).normal(0, 0.4, size=(16, 2)))
    z = euler_integrate(f, [0.3, -0.2], 0.0, 0.05, 20)
    assert constraint_residual(z, f, 0.05) <= 1e-20


def test_constraint_residual_zero_field_constant_states():
    z = np.ones((7, 2))
    assert constraint_residual(z, ZeroField(2), 0.1) == 0.0


def test_constraint_residual_unit_jump():
    # (1/k) |z1 - z0 - h*0|^2 with k = 1, jump of size 1
    z = np.array([[0.0], [1.0]])
    assert constraint_residual(z, ZeroField(1), 0.3) == pytest.approx(1.0)


# -- prediction helpers ---------------------------------------------------------


def test_predict_at_times_reads_off_nodes():
    f = ZeroField(2)
    got = predict_at_times(f, [1.0, 2.0], 0.0, [0.0, 0.35, 0.7], h=0.1)
    np.testing.assert_allclose(got, np.broadcast_to([1.0, 2.0], (3, 2)))


def test_evaluate_on_test_truncates_horizon():
    proto = replace(default_protocol("lorenz63"), err_horizon=0.2)
    t = np.arange(0, 2.001, 0.01)
    tr = Trajectory("x", t, np.zeros((len(t), 3)))
    errs = evaluate_on_test(ZeroField(3), Dataset([tr]), proto)
    assert errs[0] == 0.0


# -- experiment drivers -----------------------------------------------------------


def test_default_protocols():
    fhn = default_protocol("fhn")
    assert fhn.sigmas == (0.120, 0.365, 0.610, 0.855, 1.100)
    assert fhn.n_train == 50 and fhn.n_obs == 201 and fhn.dt_obs == 0.1
    lor = default_protocol("lorenz63")
    assert lor.sigmas == (0.5, 1.2, 1.9, 2.6, 3.3)
    assert lor.err_horizon == 0.2 and lor.dt_obs == 0.01
    l96 = default_protocol("lorenz96")
    assert l96.dim == 6 and l96.forcing == 8.0
    with pytest.raises(ConfigurationError):
        default_protocol("unknown")


def test_noise_sweep_tiny_smoke():
    proto = replace(
        default_protocol("fhn"),
        n_train=4,
        n_test=3,
        n_obs=41,
        substeps=10,
        n_features=32,
        max_iters=40,
        sigmas=(0.1,),
    )
    report = noise_sweep(proto, n_replicates=1, seed=0)
    assert len(report.cells) == 1
    cell = report.cells[0]
    assert not cell.diverged
    assert cell.err_mean > 0
    assert cell.err_sem >= 0
    assert len(list(report.rows())) == 1
    # single replicate: SEM across replicates is reported as 0
    assert report.sem_err[0] == 0.0


def test_convergence_two_point_slope_is_difference_quotient():
    rep = convergence_experiment(
        n_features=32,
        n_noise_replicates=2,
        sigma=0.05,
        full_m=40,
        min_m=20,
        horizon=2.0,
        max_iters=60,
        seed=1,
    )
    assert rep.sample_counts == [20, 40]
    expected = (np.log(rep.mean_l2_sq[1]) - np.log(rep.mean_l2_sq[0])) / (np.log(40) - np.log(20))
    assert rep.slope == pytest.approx(expected, abs=1e-12)


def test_convergence_noiseless_dense_hits_discretization_floor():
    # without noise the dense-m errors sit at the O(h^2) integration floor,
    # so the log-log slope flattens out
    rep = convergence_experiment(
        n_features=64,
        n_noise_replicates=1,
        sigma=0.0,
        full_m=1280,
        min_m=640,
        horizon=2.0,
        max_iters=80,
        seed=2,
    )
    assert max(rep.mean_l2_sq) <= 1e-3
    assert rep.slope > -0.5


def test_convergence_rejects_bad_m():
    with pytest.raises(ConfigurationError):
        convergence_experiment(full_m=4, min_m=5)
