"""Online regularized kernel regression as stochastic approximation of a
Tikhonov path: synthetic spectral models, exact path/drift oracles, the
online recursion in two representations, finite-dimensional decomposition
checks, martingale tail bounds, and a replicated-experiment harness.
"""

from ._kernels import BACKEND
from .online_learner import (
    Schedule,
    auto_theta,
    default_checkpoints,
    make_schedule,
    minimal_t0,
    run,
    schedule_values,
)
from .reg_path import drift, drift_bound, tikhonov_solution
from .spectral_model import (
    SpectralModel,
    make_model,
    make_power_law_model,
    norm_K,
    norm_rho,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Schedule",
    "SpectralModel",
    "auto_theta",
    "default_checkpoints",
    "drift",
    "drift_bound",
    "make_model",
    "make_power_law_model",
    "make_schedule",
    "minimal_t0",
    "norm_K",
    "norm_rho",
    "run",
    "schedule_values",
    "tikhonov_solution",
    "__version__",
]
