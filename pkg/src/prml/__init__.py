"""Predictive recursion, its marginal and profile likelihoods, and their applications."""

from .data import DegenerateObservationError, KernelDomainError, ReplicatedData, ScalarData, SeriesData
from .grid import Grid, GridDensity, integrate, make_grid, make_legendre_grid, make_product_grid, make_trapezoid_grid
from .inference import FitResult, confint, fit, hessian_at
from .kernels import make_kernel
from .likelihood import (
    KnEvaluator,
    LikelihoodConfig,
    Objective,
    averaged_loglik,
    final_density,
    kn_normalized,
    likelihood_curve,
    profile_loglik,
    prml_loglik,
)
from .recursion import PRState, WeightSequence, pr_run, pr_run_grad, pr_step

__version__ = "0.1.0"
