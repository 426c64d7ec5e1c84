"""Recovery of structured signals from nonlinear observations via projected
gradient descent, plus empirical certification of the contraction condition
that drives its convergence."""

from raicpgd.core import (
    SensingEnsemble,
    WidthEstimate,
    entropy_bound_sparse,
    gaussian_ensemble,
    gaussian_width_sparse,
)
from raicpgd.links import Link, LinkRegularity, ScalingReport, apply_link, compute_mu, compute_rho
from raicpgd.constraints import ConstraintSet, DualNormEstimate, dual_norm_cone, dual_norm_convex, project
from raicpgd.solvers import GradientOp, SolverConfig, Trajectory, gradient, pgd_run, predict_envelope
from raicpgd.raic import RaicCertificate, TheoryBoundParams, certify_raic, raic_residual, theory_bound
from raicpgd.experiments import (
    CorruptionSpec,
    ExperimentSpec,
    TrialRecord,
    fit_loglog_slope,
    inject_corruption,
    run_sweep,
)

__version__ = "0.1.0"
