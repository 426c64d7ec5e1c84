"""Link functions mapping linear measurements to observations.

Each link carries declared regularity metadata (sub-Gaussian proxy, gap and
jump size of the discontinuities, piecewise Lipschitz constant, small-ball
slope) that can be audited numerically, plus the scaling factor
mu = E[f(g) g] and the mismatch rho used by the scaled-l2 solver.

Conventions: sign(0) := +1; random links consume an explicit noise draw so
evaluation stays reentrant and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr  # standard normal CDF, vectorized

from raicpgd.core import rng_from_seed

__all__ = [
    "Link",
    "LinkRegularity",
    "ScalingReport",
    "RegularityReport",
    "UnsupportedLinkError",
    "apply_link",
    "apply_link_batch",
    "marginal_link",
    "compute_mu",
    "compute_rho",
    "verify_regularity",
    "default_regularity",
]

_VARIANTS = ("identity", "identity+noise", "sign", "dithered-sign", "modulo", "logistic", "abs")
_RANDOM_VARIANTS = frozenset({"identity+noise", "dithered-sign", "logistic"})


class UnsupportedLinkError(ValueError):
    pass


def _sign(t):
    """sign with sign(0) = +1."""
    return np.where(np.asarray(t) >= 0, 1.0, -1.0)


def modulo_fold(t, lam: float):
    """Fold t into [-lam, lam) with period 2*lam."""
    t = np.asarray(t, dtype=float)
    return t - 2.0 * lam * np.floor((t + lam) / (2.0 * lam))


@dataclass(frozen=True)
class Link:
    """Descriptor of an observation nonlinearity y_i = f(a_i^T x)."""

    variant: str
    param: float = 0.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown link variant {self.variant!r}")
        if self.variant == "modulo" and self.param < 0.25:
            raise ValueError("modulo link requires lambda >= 1/4")
        if self.variant == "dithered-sign" and self.param <= 0:
            raise ValueError("dithered-sign requires a positive dither half-width")
        if self.variant == "logistic" and self.param <= 0:
            raise ValueError("logistic link requires a positive temperature")
        if self.variant == "identity+noise" and self.param < 0:
            raise ValueError("noise standard deviation must be nonnegative")

    @property
    def is_random(self) -> bool:
        return self.variant in _RANDOM_VARIANTS

    @property
    def is_binary(self) -> bool:
        return self.variant in ("sign", "dithered-sign", "logistic")


@dataclass(frozen=True)
class LinkRegularity:
    """Declared regularity constants; see verify_regularity for the audit.

    Discontinuities are either an explicit finite list or an arithmetic
    progression {offset + step*j : j integer} (step > 0).
    """

    phi1: float
    phi2: float  # inf whenever there is at most one discontinuity
    phi3: float
    phi4: float
    phi5: float
    disc_points: tuple = ()
    disc_offset: float | None = None
    disc_step: float | None = None

    def has_discontinuities(self) -> bool:
        return bool(self.disc_points) or self.disc_step is not None

    def points_in(self, lo: float, hi: float) -> np.ndarray:
        if self.disc_step is not None:
            j0 = math.ceil((lo - self.disc_offset) / self.disc_step)
            j1 = math.floor((hi - self.disc_offset) / self.disc_step)
            return self.disc_offset + self.disc_step * np.arange(j0, j1 + 1, dtype=float)
        pts = np.asarray(self.disc_points, dtype=float)
        return pts[(pts >= lo) & (pts <= hi)]

    def distance(self, t) -> np.ndarray:
        """Pointwise distance to the discontinuity set (inf if empty)."""
        t = np.asarray(t, dtype=float)
        if self.disc_step is not None:
            frac = (t - self.disc_offset) / self.disc_step
            return self.disc_step * np.abs(frac - np.round(frac))
        if not self.disc_points:
            return np.full_like(t, np.inf)
        pts = np.asarray(self.disc_points, dtype=float)
        return np.abs(t[..., None] - pts).min(axis=-1)


@dataclass(frozen=True)
class ScalingReport:
    mu: float
    rho: float = 0.0
    method: str = "closed-form"
    nodes: int = 0
    error_estimate: float = 0.0


def apply_link(link: Link, t: float, noise_draw: float | None = None) -> float:
    """Evaluate y = f(t) for a single measurement.

    Random variants require a noise draw: standard normal for
    identity+noise, uniform on [0, 1) for dithered-sign and logistic.
    """
    if link.is_random and noise_draw is None:
        raise ValueError(f"link {link.variant!r} is random and needs a noise draw")
    v = link.variant
    if v == "identity":
        return float(t)
    if v == "identity+noise":
        return float(t + link.param * noise_draw)
    if v == "sign":
        return float(_sign(t))
    if v == "dithered-sign":
        dither = (2.0 * noise_draw - 1.0) * link.param
        return float(_sign(t + dither))
    if v == "modulo":
        return float(modulo_fold(t, link.param))
    if v == "logistic":
        p = 1.0 / (1.0 + math.exp(-link.param * t))
        return 1.0 if noise_draw < p else -1.0
    if v == "abs":
        return float(abs(t))
    raise AssertionError(v)


def apply_link_batch(link: Link, t: np.ndarray, rng_seed: int | None = None) -> np.ndarray:
    """Vectorized observation generation; draws link randomness from rng_seed."""
    t = np.asarray(t, dtype=float)
    if not link.is_random:
        if link.variant == "identity":
            return t.copy()
        if link.variant == "sign":
            return _sign(t)
        if link.variant == "modulo":
            return modulo_fold(t, link.param)
        if link.variant == "abs":
            return np.abs(t)
        raise AssertionError(link.variant)
    if rng_seed is None:
        raise ValueError(f"link {link.variant!r} is random and needs an rng seed")
    rng = rng_from_seed(rng_seed)
    if link.variant == "identity+noise":
        return t + link.param * rng.standard_normal(t.shape)
    if link.variant == "dithered-sign":
        dither = rng.uniform(-link.param, link.param, t.shape)
        return _sign(t + dither)
    if link.variant == "logistic":
        p = 1.0 / (1.0 + np.exp(-link.param * t))
        return np.where(rng.random(t.shape) < p, 1.0, -1.0)
    raise AssertionError(link.variant)


def marginal_link(link: Link, t) -> np.ndarray:
    """E[f(t) | t], averaging over the link's own randomness."""
    t = np.asarray(t, dtype=float)
    v = link.variant
    if v in ("identity", "identity+noise"):
        return t.copy()
    if v == "sign":
        return _sign(t)
    if v == "dithered-sign":
        return np.clip(t / link.param, -1.0, 1.0)
    if v == "modulo":
        return modulo_fold(t, link.param)
    if v == "logistic":
        # outputs in {-1,+1} with P(+1) = sigmoid(beta t)
        return np.tanh(link.param * t / 2.0)
    if v == "abs":
        return np.abs(t)
    raise AssertionError(v)


def _gauss_expectation(integrand, breakpoints=(), half_width: float = 8.0, nodes: int = 200):
    """Integrate integrand(t) * phi(t) over [-hw, hw], splitting the panel at
    the given breakpoints (Gauss-Legendre per panel)."""
    edges = sorted({-half_width, half_width, *[b for b in breakpoints if -half_width < b < half_width]})
    x, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        t = mid + half * x
        pdf = np.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)
        total += half * float(np.sum(w * integrand(t) * pdf))
    return total


def _link_breakpoints(link: Link, scale: float = 1.0, half_width: float = 8.0):
    """Discontinuities of t -> f(scale * t) within the integration window."""
    if link.variant == "sign":
        return (0.0,)
    if link.variant == "dithered-sign":
        return (-link.param / scale, link.param / scale)  # kinks of the marginal
    if link.variant == "modulo":
        lam = link.param
        kmax = math.ceil((half_width * scale + lam) / (2 * lam))
        return tuple((2 * j - 1) * lam / scale for j in range(-kmax, kmax + 2))
    return ()


def compute_mu(link: Link, nodes: int = 200) -> ScalingReport:
    """The scaling mu = E[f(g) g], g ~ N(0,1), marginalized over link noise.

    Closed form where one exists, otherwise split Gauss-Legendre quadrature
    with an error estimate from doubling the node count.
    """
    v = link.variant
    if v == "abs":
        raise UnsupportedLinkError(
            "abs is an even link with E[f(g)g] = 0; the scaled-l2 solver does not apply"
        )
    if v in ("identity", "identity+noise"):
        return ScalingReport(mu=1.0)
    if v == "sign":
        return ScalingReport(mu=math.sqrt(2.0 / math.pi))
    if v == "modulo":
        return ScalingReport(mu=1.0)

    def integrand(t):
        return marginal_link(link, t) * t

    brk = _link_breakpoints(link)
    val = _gauss_expectation(integrand, brk, nodes=nodes)
    val2 = _gauss_expectation(integrand, brk, nodes=2 * nodes)
    return ScalingReport(mu=val2, method="quadrature", nodes=2 * nodes, error_estimate=abs(val2 - val))


def quadrature_mu(link: Link, nodes: int = 400) -> float:
    """Independent numeric value of E[f(g) g] (used to cross-check the closed
    forms; always integrates, even when a closed form exists)."""
    brk = _link_breakpoints(link)
    return _gauss_expectation(lambda t: marginal_link(link, t) * t, brk, nodes=nodes)


def compute_rho(link: Link, signal_norm: float, mu: float, nodes: int = 400) -> float:
    """Model mismatch rho = | E[f(s g) g] / mu - s | at signal norm s."""
    if mu == 0:
        raise ValueError("mu must be nonzero")
    if signal_norm <= 0:
        raise ValueError("signal norm must be positive")
    s = signal_norm
    brk = _link_breakpoints(link, scale=s)
    val = _gauss_expectation(lambda t: marginal_link(link, s * t) * t, brk, nodes=nodes)
    return abs(val / mu - s)


def default_regularity(link: Link, mu: float | None = None) -> LinkRegularity:
    """Documented regularity constants for the built-in links.

    phi5 for modulo uses the explicit small-ball constant
    2 * sqrt(8/pi) * exp(-lam^2/8) / (1 - exp(-lam^2/8)).
    """
    v = link.variant
    if mu is None:
        mu = compute_mu(link).mu
    if v in ("identity", "identity+noise"):
        sigma = link.param if v == "identity+noise" else 0.0
        return LinkRegularity(phi1=max(sigma, 1e-12), phi2=math.inf, phi3=0.0, phi4=0.0, phi5=0.0)
    if v == "sign":
        # f~(t) = t - sign(t)/mu: unit slope within pieces, jump 2 at 0
        return LinkRegularity(
            phi1=2.0, phi2=math.inf, phi3=2.0, phi4=1.0,
            phi5=math.sqrt(2.0 / math.pi) + 0.05, disc_points=(0.0,),
        )
    if v == "modulo":
        lam = link.param
        e = math.exp(-lam * lam / 8.0)
        return LinkRegularity(
            phi1=2.0 + lam, phi2=2.0 * lam, phi3=2.0 * lam, phi4=0.0,
            phi5=2.0 * math.sqrt(8.0 / math.pi) * e / (1.0 - e),
            disc_offset=lam, disc_step=2.0 * lam,
        )
    if v == "dithered-sign":
        # marginal is continuous; the raw link jumps by 2 wherever it flips
        return LinkRegularity(phi1=2.0, phi2=math.inf, phi3=2.0, phi4=1.0 + 1.0 / (mu * link.param), phi5=0.0)
    if v == "logistic":
        return LinkRegularity(phi1=2.0, phi2=math.inf, phi3=0.0, phi4=1.0 + link.param / (2 * mu), phi5=0.0)
    raise UnsupportedLinkError(f"no default regularity for {v!r}")


@dataclass
class RegularityReport:
    checks: list = field(default_factory=list)  # (condition, passed, measured, declared)

    @property
    def ok(self) -> bool:
        return all(passed for _, passed, _, _ in self.checks)

    @property
    def failures(self) -> list:
        return [c for c in self.checks if not c[1]]

    def add(self, condition: str, passed: bool, measured: float, declared: float):
        self.checks.append((condition, bool(passed), float(measured), float(declared)))


def verify_regularity(
    link: Link,
    declared: LinkRegularity,
    tolerance: float = 1e-6,
    mu: float | None = None,
    signal_norm: float = 1.0,
    mc_samples: int = 200_000,
    seed: int = 20260826,
) -> RegularityReport:
    """Numeric audit of the declared regularity constants.

    The sub-Gaussian proxy is a moment-ratio heuristic (max over even p of
    (E|f~|^p)^{1/p} / sqrt(p)), not a tight psi2 norm; the remaining checks
    are direct evaluations.
    """
    if mu is None:
        mu = compute_mu(link).mu
    report = RegularityReport()
    rng = rng_from_seed(seed)

    def ftilde(t, noise_seed=None):
        if link.is_random:
            y = apply_link_batch(link, t, rng_seed=noise_seed)
        else:
            y = apply_link_batch(link, t)
        return t - y / mu

    # (C1) moment-ratio proxy for the psi2 norm of f~(s g)
    g = rng.standard_normal(mc_samples) * signal_norm
    vals = np.abs(ftilde(g, noise_seed=seed + 1))
    proxy = max(float(np.mean(vals**p)) ** (1.0 / p) / math.sqrt(p) for p in (2, 4, 6, 8, 10))
    report.add("C1", proxy <= declared.phi1 + tolerance, proxy, declared.phi1)

    # (C2) minimal pairwise gap of the declared discontinuities
    if declared.disc_step is not None:
        gap = declared.disc_step
    else:
        pts = np.sort(np.asarray(declared.disc_points, dtype=float))
        gap = float(np.diff(pts).min()) if len(pts) > 1 else math.inf
    if declared.disc_step is None and len(declared.disc_points) <= 1:
        report.add("C2", math.isinf(declared.phi2), gap, declared.phi2)
    else:
        report.add("C2", gap >= declared.phi2 - tolerance, gap, declared.phi2)

    # (C3) jump heights of f at the declared discontinuities (one-sided limits)
    xi = declared.points_in(-10.0, 10.0)
    if len(xi):
        h = 1e-9
        jumps = np.abs(marginal_link(link, xi + h) - marginal_link(link, xi - h))
        measured3 = float(jumps.max())
    else:
        measured3 = 0.0
    report.add("C3", measured3 <= declared.phi3 + 1e-6, measured3, declared.phi3)

    # (C4) difference quotients of f~ within pieces
    a = rng.uniform(-8, 8, 20_000)
    step = rng.uniform(1e-6, 1e-3, a.shape)
    b = a + step
    if declared.has_discontinuities():
        # keep pairs strictly inside one piece
        da, db = declared.distance(a), declared.distance(b)
        keep = (da > step) & (db > step)
        a, b = a[keep], b[keep]
    quot = np.abs(ftilde(b, noise_seed=seed + 2) - ftilde(a, noise_seed=seed + 2)) / (b - a)
    measured4 = float(quot.max()) if len(quot) else 0.0
    if link.is_random:
        # independent noise draws at a and b make quotients meaningless
        measured4 = 0.0
    report.add("C4", measured4 <= declared.phi4 + max(tolerance, 1e-3), measured4, declared.phi4)

    # (C5) small-ball probability around the discontinuities, s = signal_norm
    if declared.has_discontinuities() and declared.phi5 > 0:
        tmax = min(declared.phi2 / 4.0, 1.0)
        worst_ratio = 0.0
        for t in np.linspace(tmax / 20.0, tmax * 0.999, 20):
            pts = declared.points_in(-12.0 * signal_norm, 12.0 * signal_norm)
            lo, hi = (pts - t) / signal_norm, (pts + t) / signal_norm
            prob = float(np.sum(ndtr(hi) - ndtr(lo)))
            worst_ratio = max(worst_ratio, prob / t)
        report.add("C5", worst_ratio <= declared.phi5 + tolerance, worst_ratio, declared.phi5)
    else:
        report.add("C5", True, 0.0, declared.phi5)

    # composite piecewise bound on random pairs:
    # |f~(b1)-f~(b2)| <= phi4 |b1-b2| + (|b1-b2|/phi2 + 1) * phi3/mu
    if not link.is_random:
        b1 = rng.uniform(-8, 8, 10_000)
        b2 = rng.uniform(-8, 8, 10_000)
        lhs = np.abs(ftilde(b1) - ftilde(b2))
        ratio = np.abs(b1 - b2) / declared.phi2 if math.isfinite(declared.phi2) else 0.0
        rhs = declared.phi4 * np.abs(b1 - b2) + (ratio + 1.0) * declared.phi3 / abs(mu)
        viol = int(np.sum(lhs > rhs + 1e-9))
        report.add("piecewise-bound", viol == 0, float(viol), 0.0)
    return report
