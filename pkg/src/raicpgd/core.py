"""Seeded Gaussian sensing ensembles and complexity-measure estimators.

All randomness flows through numpy's Philox counter-based generator with
numpy's ziggurat Gaussian transform, so a (shape, seed) pair regenerates the
same matrix bit-exactly on any platform running the same numpy version.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SensingEnsemble",
    "WidthEstimate",
    "derive_seed",
    "gaussian_ensemble",
    "gaussian_width_sparse",
    "entropy_bound_sparse",
    "rng_from_seed",
]


def rng_from_seed(seed: int) -> np.random.Generator:
    """Philox-backed generator; the single RNG construction point."""
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary labels, independent of call order
    elsewhere (SHA-256 based, not Python's salted ``hash``)."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass(frozen=True)
class SensingEnsemble:
    """An m x n matrix of i.i.d. standard Gaussian rows a_1, ..., a_m."""

    rows: int
    cols: int
    matrix: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        if self.matrix.shape != (self.rows, self.cols):
            raise ValueError("matrix shape does not match (rows, cols)")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("ensemble entries must be finite")
        self.matrix.setflags(write=False)


@dataclass(frozen=True)
class WidthEstimate:
    value: float
    std_error: float
    samples: int

    def __post_init__(self):
        if self.value < 0 or self.std_error < 0:
            raise ValueError("width estimate and its standard error are nonnegative")


def gaussian_ensemble(m: int, n: int, seed: int) -> SensingEnsemble:
    """Draw an m x n i.i.d. N(0,1) sensing matrix, reproducible from the seed."""
    if m < 1 or n < 1:
        raise ValueError(f"ensemble dimensions must be positive, got ({m}, {n})")
    matrix = rng_from_seed(seed).standard_normal((m, n))
    return SensingEnsemble(rows=m, cols=n, matrix=matrix, seed=seed)


def _topk_sq_norm(g: np.ndarray, k: int) -> np.ndarray:
    """Row-wise squared l2 norm of the k largest-magnitude entries."""
    sq = np.square(g)
    if k >= g.shape[-1]:
        return sq.sum(axis=-1)
    part = np.partition(sq, -k, axis=-1)
    return part[..., -k:].sum(axis=-1)


def gaussian_width_sparse(n: int, k: int, samples: int, seed: int) -> WidthEstimate:
    """Monte Carlo estimate of E sup <g, u> over k-sparse unit-ball vectors.

    The per-sample supremum has the closed form ||top-k entries of g||_2, so
    each draw contributes exactly; only the outer expectation is sampled.
    """
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = rng_from_seed(seed)
    sups = np.empty(samples)
    # chunked so huge sample counts do not materialize a samples x n matrix
    done = 0
    chunk = max(1, min(samples, 1 << 22 // max(n, 1)))
    while done < samples:
        take = min(chunk, samples - done)
        g = rng.standard_normal((take, n))
        sups[done : done + take] = np.sqrt(_topk_sq_norm(g, k))
        done += take
    value = float(sups.mean())
    stderr = float(sups.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return WidthEstimate(value=value, std_error=stderr, samples=samples)


def entropy_bound_sparse(n: int, k: int, eps: float) -> float:
    """Covering-entropy upper bound k*(log(en/k) + log(3/eps)) for k-sparse
    unit vectors; the net constant 3 is the standard volumetric one."""
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    return k * (math.log(math.e * n / k) + math.log(3.0 / eps))
