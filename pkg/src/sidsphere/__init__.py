"""Self-interacting diffusions on spheres: simulation, Gibbs-measure numerics, rate diagnostics."""
from .geometry import SpherePoint, TangentVector, coordinate_surface_gradient, exp_map, project_to_tangent
from .gibbs import (
    capital_lambda,
    classify_regime,
    cov_eigen_oracle,
    gibbs_profile,
    h_quadrature,
    lambda_profile,
    rate_eta,
    rho_ode,
    rho_quadrature,
)
from .interaction import FeatureMap, OccupationState, TestFunction, drift, identity_features, update_occupation
from .schedules import BetaSchedule
from .simulate import SimConfig, TrajectoryRecord, em_step, run_ensemble, run_trajectory

__version__ = "0.1.0"
