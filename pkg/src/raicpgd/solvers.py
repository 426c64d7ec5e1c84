"""Projected gradient descent with three gradient operators and the
linear-convergence envelope predictor.

Gradients (A has rows a_i, u the current iterate, y the observations):
  scaled-l2:  (1/m) sum (mu a_i^T u - y_i) mu a_i
  relu:       (1/2m) sum (sign(a_i^T u) - y_i) a_i           (binary y)
  amplitude:  (1/m) sum (|a_i^T u| - y_i) sign(a_i^T u) a_i

sign(0) = +1 throughout.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from raicpgd.constraints import ConstraintSet, project
from raicpgd.core import SensingEnsemble

__all__ = [
    "GradientOp",
    "SolverConfig",
    "Trajectory",
    "DivergenceError",
    "ContractionError",
    "gradient",
    "pgd_run",
    "predict_envelope",
]

_GRADIENT_VARIANTS = ("scaled-l2", "relu", "amplitude")


class DivergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None, errors=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.errors = errors


class ContractionError(ValueError):
    pass


@dataclass(frozen=True)
class GradientOp:
    variant: str
    mu: float | None = None  # used by scaled-l2 only; None = resolve from the link

    def __post_init__(self):
        if self.variant not in _GRADIENT_VARIANTS:
            raise ValueError(f"unknown gradient operator {self.variant!r}")
        if self.variant == "scaled-l2" and self.mu == 0:
            raise ValueError("scaled-l2 gradient requires nonzero mu")


@dataclass(frozen=True)
class SolverConfig:
    eta: float | None
    max_iters: int
    normalize: bool = False
    target_norm: float = 1.0
    x0: np.ndarray | None = None
    near_truth_delta: float | None = None  # oracle initialization, test-only
    stop_tol: float = 0.0

    def __post_init__(self):
        if self.eta is not None and self.eta <= 0:
            raise ValueError("step size must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")


@dataclass
class Trajectory:
    iterates: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    iters_run: int = 0
    wall_ms: float = 0.0
    oracle_init: bool = False

    @property
    def final_error(self) -> float:
        return self.errors[-1] if self.errors else math.nan


def _signp(t):
    return np.where(np.asarray(t) >= 0, 1.0, -1.0)


def gradient(op: GradientOp, u: np.ndarray, A: SensingEnsemble, y: np.ndarray) -> np.ndarray:
    """Evaluate the chosen gradient operator at u."""
    M = A.matrix
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    if u.shape[0] != A.cols or y.shape[0] != A.rows:
        raise ValueError("dimension mismatch between iterate, ensemble and observations")
    Au = M @ u
    m = A.rows
    if op.variant == "scaled-l2":
        if op.mu is None:
            raise ValueError("scaled-l2 gradient needs a resolved mu")
        return (op.mu / m) * (M.T @ (op.mu * Au - y))
    if op.variant == "relu":
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("relu subgradient requires observations in {-1,+1}")
        return (0.5 / m) * (M.T @ (_signp(Au) - y))
    if op.variant == "amplitude":
        return (1.0 / m) * (M.T @ ((np.abs(Au) - y) * _signp(Au)))
    raise AssertionError(op.variant)


def _error_metric(op: GradientOp, u: np.ndarray, truth: np.ndarray) -> float:
    if op.variant == "amplitude":
        return float(min(np.linalg.norm(u - truth), np.linalg.norm(u + truth)))
    return float(np.linalg.norm(u - truth))


def pgd_run(
    config: SolverConfig,
    A: SensingEnsemble,
    y: np.ndarray,
    cset: ConstraintSet,
    op: GradientOp,
    truth: np.ndarray | None = None,
    keep_iterates: bool = True,
) -> Trajectory:
    """Run x_{t+1} = P_K(x_t - eta * h(x_t)), optionally renormalized to the
    target norm each iteration; errors are tracked when truth is given
    (phaseless distance for the amplitude gradient)."""
    t0 = time.perf_counter()
    n = A.cols
    if config.eta is None:
        if op.variant == "scaled-l2":
            eta = 1.0 / op.mu**2
        else:
            eta = 1.0
    else:
        eta = config.eta
    traj = Trajectory()
    if config.near_truth_delta is not None:
        if truth is None:
            raise ValueError("near-truth initialization needs the true signal")
        d = np.zeros(n)
        d[: min(3, n)] = 1.0
        x = truth + config.near_truth_delta * d / np.linalg.norm(d)
        x = project(cset, x)
        traj.oracle_init = True
    elif config.x0 is not None:
        x = np.asarray(config.x0, dtype=float).copy()
    else:
        x = np.zeros(n)
    scale_guard = 1e6 * max(config.target_norm, 1.0)

    def record(u):
        if keep_iterates:
            traj.iterates.append(u.copy())
        if truth is not None:
            traj.errors.append(_error_metric(op, u, truth))

    record(x)
    for _ in range(config.max_iters):
        x_new = project(cset, x - eta * gradient(op, x, A, y))
        if config.normalize:
            nrm = np.linalg.norm(x_new)
            if nrm == 0.0:
                x_new = np.zeros(n)
                x_new[0] = config.target_norm
            else:
                x_new = x_new * (config.target_norm / nrm)
        if not np.all(np.isfinite(x_new)) or np.linalg.norm(x_new) > scale_guard:
            raise DivergenceError("PGD iterate diverged", last_iterate=x, errors=traj.errors)
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        traj.iters_run += 1
        record(x)
        if config.stop_tol > 0 and step < config.stop_tol:
            break
    traj.wall_ms = (time.perf_counter() - t0) * 1e3
    return traj


def predict_envelope(mu1: float, mu2: float, phi: float, init_error: float, t: int) -> float:
    """Closed-form error envelope
    f_t = (2 mu1)^t * init + (2 mu2 + phi) * (1 - (2 mu1)^t) / (1 - 2 mu1);
    phi = 0 recovers the cone case."""
    if mu1 >= 0.5:
        raise ContractionError(f"mu1 = {mu1} >= 1/2: no contraction")
    if min(mu1, mu2, phi, init_error) < 0:
        raise ValueError("envelope parameters must be nonnegative")
    r = 2.0 * mu1
    rt = r**t
    return rt * init_error + (2.0 * mu2 + phi) * (1.0 - rt) / (1.0 - r)
