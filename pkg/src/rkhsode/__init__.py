"""rkhsode: nonparametric ODE vector fields learned in vector-valued RKHSs.

Fits dx/dt = f(x) (or f(t, x)) to noisy, possibly sparse multi-trajectory
observations with a penalty method that alternates banded latent-state
updates and kernel ridge regression, then predicts by Euler integration.
"""

from .data import Dataset, TimeGrid, Trajectory, add_noise, build_grid, build_grids, load_dataset, save_dataset, sample_weights
from .errors import ConfigurationError, DataFormatError, DivergenceError, NumericalError
from .evaluation import (
    BenchmarkProtocol,
    ConvergenceReport,
    SweepReport,
    constraint_residual,
    convergence_experiment,
    default_protocol,
    err_metric,
    l2_sq_distance,
    noise_sweep,
    predict_at_times,
)
from .kernels import (
    FeatureMapSpec,
    LipschitzReport,
    MatrixKernelSpec,
    ScalarKernelSpec,
    check_lipschitz,
    feature_map,
    gram,
    kernel_from_json,
    kernel_metric_sq,
    kernel_to_json,
    matrix_eval,
    scalar_eval,
)
from .ode import (
    AnalyticField,
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
from .solver import (
    FitResult,
    SolverConfig,
    central_differences,
    config_from_json,
    config_to_json,
    f_step_features,
    f_step_representer,
    field_change_norm,
    gradient_matching_init,
    penalty_fit,
    predict,
    z_step,
)

__version__ = "0.1.0"
