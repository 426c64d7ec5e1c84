"""Empirical measurement of the restricted approximate invertibility
condition (RAIC) and the matching theory-side bound calculators.

A residual for a probe pair (x, u) is
    R = || u - x - eta * h_x(u) ||_dual
with the dual norm taken over the 2k-sparse unit-ball vectors (cone case,
exact) or over (K - x) in a radius-phi ball divided by phi (convex case,
certified lower bound).  A certificate fits the conservative max-envelope
R <= mu1_hat ||u - x||_2 + mu2_hat over the probe set only; it makes no
claim about the full signal class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from raicpgd.constraints import ConstraintSet, dual_norm_cone, dual_norm_convex, project
from raicpgd.core import SensingEnsemble, derive_seed, rng_from_seed
from raicpgd.links import Link, apply_link_batch
from raicpgd.solvers import GradientOp, SolverConfig, gradient, pgd_run

__all__ = [
    "RaicCertificate",
    "TheoryBoundParams",
    "raic_residual",
    "certify_raic",
    "multiplier_process_sup",
    "gradient_mismatch_sup",
    "theory_bound",
    "sample_sparse_sphere",
]


def sample_sparse_sphere(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform support, Gaussian values, unit norm."""
    x = np.zeros(n)
    supp = rng.choice(n, size=k, replace=False)
    vals = rng.standard_normal(k)
    x[supp] = vals / np.linalg.norm(vals)
    return x


@dataclass
class RaicCertificate:
    mu1_hat: float
    mu2_hat: float
    eta: float
    phi: float | None
    n_pairs: int
    sampler: str
    seed: int
    residuals: list = field(default_factory=list)  # (||u - x||_2, R) records

    def to_json(self) -> str:
        d = asdict(self)
        d["residuals"] = [[float(a), float(b)] for a, b in self.residuals]
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RaicCertificate":
        d = json.loads(text)
        d["residuals"] = [tuple(r) for r in d["residuals"]]
        return cls(**d)


def observations(A: SensingEnsemble, link: Link, x: np.ndarray, rng_seed: int | None = None) -> np.ndarray:
    return apply_link_batch(link, A.matrix @ x, rng_seed=rng_seed if link.is_random else None)


def raic_residual(
    A: SensingEnsemble,
    link: Link,
    x: np.ndarray,
    u: np.ndarray,
    mu: float,
    cset: ConstraintSet,
    eta: float,
    phi: float | None = None,
    rng_seed: int = 0,
) -> float:
    """Residual of the ideal step u - x against the actual step eta * h_x(u)
    in the structure-adapted dual norm."""
    y = observations(A, link, x, rng_seed=rng_seed)
    h = gradient(GradientOp("scaled-l2", mu=mu), u, A, y)
    res = u - x - eta * h
    if cset.is_cone:
        return dual_norm_cone(res, cset.k).value
    if phi is None or phi <= 0:
        raise ValueError("convex sets need a positive scale phi")
    est = dual_norm_convex(res, cset, x, phi)
    return est.value / phi


def _probe_pairs(
    A: SensingEnsemble,
    link: Link,
    cset: ConstraintSet,
    sampler: str,
    n_pairs: int,
    mu: float,
    eta: float,
    seed: int,
    signal_k: int | None = None,
):
    """Generate (x, u) probe pairs, always including diagonal pairs u = x."""
    n = A.cols
    k = cset.k if cset.is_cone else (signal_k or max(1, n // 16))
    rng = rng_from_seed(seed)
    pairs = []
    if sampler == "random-random":
        n_diag = max(1, n_pairs // 10)
        for i in range(n_pairs):
            x = sample_sparse_sphere(n, k, rng)
            if i < n_diag:
                pairs.append((x, x.copy()))
            else:
                scale = rng.uniform(0.05, 2.0)
                pert = np.zeros(n)
                supp = rng.choice(n, size=k, replace=False)
                pert[supp] = rng.standard_normal(k)
                u = project(cset, x + scale * pert / np.linalg.norm(pert))
                pairs.append((x, u))
    elif sampler == "trajectory":
        per_signal = 25
        n_signals = max(1, n_pairs // per_signal)
        cfg = SolverConfig(eta=eta, max_iters=per_signal - 2, stop_tol=0.0)
        op = GradientOp("scaled-l2", mu=mu)
        for i in range(n_signals):
            x = sample_sparse_sphere(n, k, rng)
            y = observations(A, link, x, rng_seed=derive_seed(seed, "traj", i))
            traj = pgd_run(cfg, A, y, cset, op, truth=x)
            pairs.append((x, x.copy()))
            for it in traj.iterates:
                pairs.append((x, it.copy()))
    else:
        raise ValueError(f"unknown probe sampler {sampler!r}")
    return pairs[:max(len(pairs), 1)]


def certify_raic(
    A: SensingEnsemble,
    link: Link,
    cset: ConstraintSet,
    sampler: str,
    n_pairs: int,
    eta: float,
    mu: float,
    phi: float | None = None,
    seed: int = 0,
    signal_k: int | None = None,
) -> RaicCertificate:
    """Fit the conservative affine envelope over sampled probe pairs.

    mu2_hat is the worst residual over diagonal pairs (u = x); mu1_hat the
    worst excess slope (R - mu2_hat) / ||u - x||_2 over the rest.
    """
    if n_pairs < 1:
        raise ValueError("need at least one probe pair")
    pairs = _probe_pairs(A, link, cset, sampler, n_pairs, mu, eta, seed, signal_k)
    if not pairs:
        raise ValueError("probe sampler produced no pairs")
    records = []
    for i, (x, u) in enumerate(pairs):
        r = raic_residual(A, link, x, u, mu, cset, eta, phi=phi, rng_seed=derive_seed(seed, "obs", i))
        records.append((float(np.linalg.norm(u - x)), float(r)))
    diag = [r for d, r in records if d <= 1e-12]
    off = [(d, r) for d, r in records if d > 1e-12]
    if not diag:
        raise ValueError("probe set must include at least one diagonal pair (u = x)")
    mu2 = max(diag)
    mu1 = max((max(0.0, (r - mu2) / d) for d, r in off), default=0.0)
    return RaicCertificate(
        mu1_hat=mu1, mu2_hat=mu2, eta=eta, phi=phi,
        n_pairs=len(records), sampler=sampler, seed=seed, residuals=records,
    )


def multiplier_process_sup(
    A: SensingEnsemble,
    link: Link,
    mu: float,
    signal_net: list,
    k: int,
    rng_seed: int = 0,
) -> float:
    """Max over the net of the dual norm of the per-signal gradient mismatch
    (1/m) sum (a_i^T x - f(a_i^T x)/mu) a_i."""
    if not signal_net:
        raise ValueError("signal net must be nonempty")
    best = 0.0
    M = A.matrix
    for i, x in enumerate(signal_net):
        t = M @ np.asarray(x, dtype=float)
        y = apply_link_batch(link, t, rng_seed=derive_seed(rng_seed, i) if link.is_random else None)
        mismatch = (M.T @ (t - y / mu)) / A.rows
        best = max(best, dual_norm_cone(mismatch, k).value)
    return best


def gradient_mismatch_sup(
    A: SensingEnsemble,
    clean_y: np.ndarray,
    corrupt_y: np.ndarray,
    mu: float,
    eta: float,
    k: int,
    family: str = "scaled-l2",
) -> float:
    """eta times the dual norm of the corruption-induced gradient shift.

    For the scaled-l2 and relu families the shift (c/m) sum (y_i - y~_i) a_i
    does not depend on the iterate (c = mu for scaled-l2, 1/2 for relu)."""
    clean_y = np.asarray(clean_y, dtype=float)
    corrupt_y = np.asarray(corrupt_y, dtype=float)
    if clean_y.shape != corrupt_y.shape:
        raise ValueError("observation vectors must have the same length")
    c = mu if family == "scaled-l2" else 0.5
    shift = (c / A.rows) * (A.matrix.T @ (clean_y - corrupt_y))
    return eta * dual_norm_cone(shift, k).value


@dataclass(frozen=True)
class TheoryBoundParams:
    m: int
    n: int
    k: int
    eps: float
    zeta: float
    phi1: float
    phi2: float
    phi3: float
    phi4: float
    phi5: float
    mu: float
    width_K1: float       # width of the cone difference set (or of the scaled convex one)
    width_X_eps: float    # width of the local set X_eps
    entropy: float        # covering entropy of the signal class at radius eps
    phi: float | None = None

    def __post_init__(self):
        if not (0 < self.eps < 1 and 0 < self.zeta < 1):
            raise ValueError("eps and zeta must lie in (0, 1)")
        if min(self.width_K1, self.width_X_eps, self.entropy) < 0:
            raise ValueError("widths and entropy are nonnegative")


def _xlog1x(v: float) -> float:
    if v <= 0:
        return 0.0
    if v >= 1:
        raise ValueError(f"bar quantity {v} >= 1: log(1/.) is nonpositive")
    return v * math.log(1.0 / v)


def theory_bound(params: TheoryBoundParams, mode: str):
    """Evaluate the discontinuity-cost bound, term by term.

    mode "cone-xi" returns (Xi_bar, Xi); mode "convex-upsilon" returns
    (Upsilon_bar, Upsilon).  Raises on domain violations (bar >= 1).
    """
    p = params
    zl = _xlog1x(p.zeta)
    if mode == "cone-xi":
        bar = (
            p.entropy / p.m
            + p.phi5 * p.eps * p.width_K1 / math.sqrt(p.zeta * p.m)
            + p.phi5 * p.eps * math.sqrt(math.log(math.e / p.zeta))
        )
        bl = _xlog1x(bar)
        first = math.sqrt(bar + p.zeta) * (p.width_K1 / math.sqrt(p.m) + math.sqrt(bl) + math.sqrt(zl))
        ratio = p.eps / p.phi2 if math.isfinite(p.phi2) else 0.0
        second = ratio * (p.width_K1**2 / p.m + bl + zl)
        return bar, first + second
    if mode == "convex-upsilon":
        if p.phi is None or p.phi <= 0:
            raise ValueError("convex mode needs the scale phi")
        bar = (
            p.entropy / p.m
            + p.phi5 * p.width_X_eps / math.sqrt(p.zeta * p.m)
            + p.phi5 * p.eps * math.sqrt(math.log(math.e / p.zeta))
        )
        bl = _xlog1x(bar)
        tail = math.sqrt(bl + zl)
        wk = p.width_K1  # width of the phi-scaled local constraint set
        ratio = p.eps / p.phi2 if math.isfinite(p.phi2) else 0.0
        first = ratio * (p.width_X_eps / p.eps / math.sqrt(p.m) + tail) * (wk / math.sqrt(p.m) + tail)
        second = math.sqrt(bar + p.zeta) * (wk / math.sqrt(p.m) + tail)
        return bar, first + second
    raise ValueError(f"unknown mode {mode!r}")
