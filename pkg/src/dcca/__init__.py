"""Detrended fluctuation and cross-correlation analysis with exact finite-box theory."""
from .detrend import (
    BoxGeometry,
    alpha_bruteforce,
    alpha_closed_form,
    alpha_coefficients,
    build_operators,
    j0,
)
from .errors import *  # noqa: F401,F403
from .estimator import SeriesPair, fluctuation_profile, per_box_series
from .montecarlo import McConfig, compare_modes, run_mc
from .simulate import ScenarioSpec, generate, theoretical_model
from .theory import (
    CovarianceModel,
    LinearProcessSpec,
    expected_dcca,
    expected_dfa,
    fluctuation_covariance,
    linear_process_cov,
    rho_eps,
    rho_limit,
)

__version__ = "0.1.0"
