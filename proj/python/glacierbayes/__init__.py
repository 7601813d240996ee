"""Flowline glacier thickness reconstruction.

Mass-conservation + shallow-ice dynamics, a Matern-3/2 Gaussian-process flow
width, and Metropolis-Hastings inference, implemented in C++ and exposed here.
"""

from ._core import (  # noqa: F401
    NumericalError,
    ValidationError,
    __version__,
    build_cov_matrix,
    builtin_truth_profile,
    central_difference_slope,
    conditional_predict,
    cumulative_flux,
    forward_model,
    linear_interp,
    matern32_cov,
    run_experiment,
    sample_width_prior,
    sia_correction,
    smooth_series,
    solve_thickness,
    synthetic_velocity,
    thickness_roots,
    width_log_density,
)
