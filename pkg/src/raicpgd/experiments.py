"""Monte Carlo harness: uniform-error estimation, corruption injection,
parameter sweeps with deterministic CSV output, and log-log rate fitting.

Uniform error over a signal family is approximated from below: the same
sensing matrix is reused for every sampled signal and the max recovery
error is reported, optionally sharpened by hill-climbing on the worst
signal.  Reported values are empirical worst cases (lower bounds on the
true supremum).
"""

from __future__ import annotations

import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from raicpgd.constraints import ConstraintSet
from raicpgd.core import derive_seed, gaussian_ensemble, rng_from_seed, SensingEnsemble
from raicpgd.links import Link, apply_link_batch, compute_mu
from raicpgd.raic import sample_sparse_sphere
from raicpgd.solvers import DivergenceError, GradientOp, SolverConfig, pgd_run

__all__ = [
    "CorruptionSpec",
    "ExperimentSpec",
    "TrialRecord",
    "SlopeFit",
    "inject_corruption",
    "estimate_uniform_error",
    "run_sweep",
    "records_to_csv",
    "fit_loglog_slope",
    "sample_signal",
    "preset_spec",
]

# l1 level of the sparse-with-pinned-l1-norm signal family, as a fraction of
# sqrt(k); strictly between the spike (1/sqrt(k)) and the flat profile (1)
C_STAR = 0.75

CSV_COLUMNS = [
    "experiment_id", "setting", "link", "n", "k", "m", "trial", "signal_id",
    "corruption", "corruption_param", "iters", "final_error", "diverged",
    "seed", "wall_ms",
]


@dataclass(frozen=True)
class CorruptionSpec:
    variant: str = "none"          # none | gaussian | l2-budget | bit-flips
    param: float = 0.0             # sigma | beta | eta_fraction
    heuristic: str = "random"      # l2-budget: random-direction|top-margin; bit-flips: random|largest-margin

    def __post_init__(self):
        if self.variant not in ("none", "gaussian", "l2-budget", "bit-flips"):
            raise ValueError(f"unknown corruption variant {self.variant!r}")
        if self.variant == "bit-flips" and not 0 <= self.param < 1:
            raise ValueError("bit-flip fraction must lie in [0, 1)")
        if self.variant in ("gaussian", "l2-budget") and self.param < 0:
            raise ValueError("corruption magnitude must be nonnegative")


def inject_corruption(spec: CorruptionSpec, A: SensingEnsemble, x: np.ndarray,
                      y: np.ndarray, seed: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if spec.variant == "none" or spec.param == 0:
        return y.copy()
    rng = rng_from_seed(seed)
    if spec.variant == "gaussian":
        return y + spec.param * rng.standard_normal(y.shape)
    if spec.variant == "l2-budget":
        if spec.heuristic == "top-margin":
            # budget weighted by the margins a_i^T x: the alignment that makes
            # the Cauchy-Schwarz error bound tight
            margins = A.matrix @ x
            eps = spec.param * margins / np.linalg.norm(margins)
        else:
            d = rng.standard_normal(y.shape)
            eps = spec.param * d / np.linalg.norm(d)
        return y + eps
    # bit flips
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("bit-flip corruption requires +/-1 observations")
    n_flip = int(spec.param * len(y))
    if n_flip == 0:
        return y.copy()
    if spec.heuristic == "largest-margin":
        idx = np.argsort(-np.abs(A.matrix @ x), kind="stable")[:n_flip]
    else:
        idx = rng.choice(len(y), size=n_flip, replace=False)
    out = y.copy()
    out[idx] = -out[idx]
    return out


def _l1_sphere_project(w, radius, iters=200):
    """Alternating projection onto B1(radius) ∩ sphere; heuristic."""
    from raicpgd.constraints import project_l1_ball
    v = np.asarray(w, dtype=float).copy()
    if np.linalg.norm(v) == 0:
        v[0] = 1.0
    for _ in range(iters):
        v = project_l1_ball(v, radius)
        nv = np.linalg.norm(v)
        if nv == 0:
            v[0] = 1.0
            nv = 1.0
        v = v / nv
        if abs(np.sum(np.abs(v)) - radius) < 1e-12 or np.sum(np.abs(v)) <= radius:
            break
    return v


def sample_signal(setting: str, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a unit-norm signal for one of the canonical settings.

    a: k-sparse on the sphere.  b: k-sparse unit vectors whose l1 norm is
    pinned to sqrt(k)/2 (strictly inside the sqrt(k) l1 ball).  c: mixture
    of a sparse spike and dense tail pushed onto B1(sqrt(k)) ∩ sphere.
    """
    if setting == "a":
        return sample_sparse_sphere(n, k, rng)
    if setting == "b":
        target = C_STAR * math.sqrt(k)
        if k == 1:
            x = np.zeros(n)
            x[rng.integers(n)] = 1.0
            return x  # l1 = l2 = 1 <= sqrt(k)/... only k>=4 gives slack; keep unit spike
        supp = rng.choice(n, size=k, replace=False)
        g = np.abs(rng.standard_normal(k)) + 1e-9
        # magnitudes |g|^p on the sphere sweep l1 from 1 (p→∞) to sqrt(k) (p=0)
        lo, hi = 0.0, 60.0
        for _ in range(200):
            p = 0.5 * (lo + hi)
            v = g ** p
            v = v / np.linalg.norm(v)
            if np.sum(v) > target:
                lo = p
            else:
                hi = p
        v = g ** (0.5 * (lo + hi))
        v = v / np.linalg.norm(v)
        x = np.zeros(n)
        x[supp] = v * rng.choice((-1.0, 1.0), size=k)
        return x
    if setting == "c":
        spike = sample_sparse_sphere(n, k, rng)
        dense = rng.standard_normal(n)
        w = spike + 0.3 * dense / np.linalg.norm(dense)
        return _l1_sphere_project(w, math.sqrt(k))
    raise ValueError(f"unknown setting {setting!r}")


@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    setting: str                        # a | b | c
    link: Link
    cset: ConstraintSet
    solver: SolverConfig
    op: GradientOp
    grid: tuple                         # tuple of (n, k, m)
    trials: int = 1
    signals_per_trial: int = 1
    signal_policy: str = "uniform"      # uniform | adversarial
    search_restarts: int = 0
    search_steps: int = 0
    corruption: CorruptionSpec = CorruptionSpec()
    master_seed: int = 0

    def __post_init__(self):
        if not self.grid:
            raise ValueError("grid must be nonempty")
        if self.trials < 1 or self.signals_per_trial < 1:
            raise ValueError("trials and signals_per_trial must be >= 1")
        if self.setting not in ("a", "b", "c"):
            raise ValueError(f"unknown setting {self.setting!r}")


@dataclass
class TrialRecord:
    experiment_id: str
    setting: str
    link: str
    n: int
    k: int
    m: int
    trial: int
    signal_id: int
    corruption: str
    corruption_param: float
    iters: int
    final_error: float
    diverged: bool
    seed: int
    wall_ms: float


def _recover_one(spec: ExperimentSpec, A: SensingEnsemble, x: np.ndarray,
                 mu: float, seed: int):
    t = A.matrix @ x
    obs_seed = derive_seed(seed, "obs")
    y = apply_link_batch(spec.link, t, rng_seed=obs_seed if spec.link.is_random else None)
    y = inject_corruption(spec.corruption, A, x, y, derive_seed(seed, "corrupt"))
    op = spec.op
    if op.variant == "scaled-l2" and op.mu is None:
        op = replace(op, mu=mu)
    cfg = spec.solver
    if cfg.eta is None:
        cfg = replace(cfg, eta=1.0 / mu**2 if op.variant == "scaled-l2" else 1.0)
    try:
        traj = pgd_run(cfg, A, y, spec.cset, op, truth=x, keep_iterates=False)
        return traj.final_error, traj.iters_run, False
    except DivergenceError:
        return float("nan"), cfg.max_iters, True


def _recover_batch(spec: ExperimentSpec, A: SensingEnsemble, X: np.ndarray,
                   mu: float, seeds: list):
    """Run PGD on all signal columns at once (sigma-k sets only).

    Matches _recover_one's arithmetic: same init, step, projection, and
    normalization, just expressed column-wise so each sweep is one gemm."""
    from raicpgd.constraints import hard_threshold
    m, n = A.rows, A.cols
    s = X.shape[1]
    M = A.matrix
    k = spec.cset.k
    Y = np.empty((m, s))
    for j in range(s):
        obs_seed = derive_seed(seeds[j], "obs")
        yj = apply_link_batch(spec.link, M @ X[:, j],
                              rng_seed=obs_seed if spec.link.is_random else None)
        Y[:, j] = inject_corruption(spec.corruption, A, X[:, j], yj,
                                    derive_seed(seeds[j], "corrupt"))
    op = spec.op
    mu_eff = op.mu if op.mu is not None else mu
    cfg = spec.solver
    eta = cfg.eta if cfg.eta is not None else (
        1.0 / mu_eff**2 if op.variant == "scaled-l2" else 1.0)
    U = np.zeros((n, s))
    diverged = np.zeros(s, dtype=bool)
    guard = 1e6 * max(cfg.target_norm, 1.0)
    for _ in range(cfg.max_iters):
        T = M @ U
        if op.variant == "scaled-l2":
            G = (mu_eff / m) * (M.T @ (mu_eff * T - Y))
        elif op.variant == "relu":
            S = np.where(T >= 0, 1.0, -1.0)
            G = M.T @ (S - Y) / (2 * m)
        else:
            G = M.T @ ((np.abs(T) - Y) * np.where(T >= 0, 1.0, -1.0)) / m
        W = U - eta * G
        for j in range(s):
            if diverged[j]:
                continue
            v = hard_threshold(W[:, j], k)
            if cfg.normalize:
                nv = np.linalg.norm(v)
                if nv == 0.0:
                    v = np.zeros(n)
                    v[0] = cfg.target_norm
                else:
                    v = (cfg.target_norm / nv) * v
            if not np.all(np.isfinite(v)) or np.linalg.norm(v) > guard:
                diverged[j] = True
                continue
            U[:, j] = v
    errs = np.full(s, np.nan)
    for j in range(s):
        if diverged[j]:
            continue
        d = np.linalg.norm(U[:, j] - X[:, j])
        if op.variant == "amplitude":
            d = min(d, np.linalg.norm(U[:, j] + X[:, j]))
        errs[j] = d
    return errs, diverged


def estimate_uniform_error(spec: ExperimentSpec, A: SensingEnsemble, mu: float,
                           seed: int, k: int | None = None):
    """Max recovery error over signals_per_trial draws on a fixed A,
    optionally refined by hill-climbing; a lower bound on the true sup.

    Returns (max_error, argmax_signal, total_iters, any_diverged)."""
    n = A.cols
    if k is None:
        k = spec.cset.k if spec.cset.is_cone else spec.grid[0][1]
    best_err, best_x = -1.0, None
    total_iters, any_div = 0, False
    signals = []
    for s in range(spec.signals_per_trial):
        rng = rng_from_seed(derive_seed(seed, "signal", s))
        signals.append(sample_signal(spec.setting, n, k, rng))
    batch_ok = (spec.cset.is_cone and spec.solver.x0 is None
                and spec.solver.stop_tol == 0
                and spec.solver.near_truth_delta is None)
    if batch_ok:
        X = np.column_stack(signals)
        run_seeds = [derive_seed(seed, "run", s) for s in range(len(signals))]
        errs, divs = _recover_batch(spec, A, X, mu, run_seeds)
        total_iters += spec.solver.max_iters * len(signals)
        any_div = bool(np.any(divs))
        for s, x in enumerate(signals):
            if not divs[s] and errs[s] > best_err:
                best_err, best_x = float(errs[s]), x
    else:
        for s, x in enumerate(signals):
            err, iters, div = _recover_one(spec, A, x, mu, derive_seed(seed, "run", s))
            total_iters += iters
            any_div = any_div or div
            if not div and err > best_err:
                best_err, best_x = err, x
    if spec.signal_policy == "adversarial" and best_x is not None:
        step = 0.3
        for r in range(max(1, spec.search_restarts)):
            for t in range(spec.search_steps):
                rng = rng_from_seed(derive_seed(seed, "adv", r, t))
                cand = best_x + step * rng.standard_normal(n)
                cand = _signal_feasible(spec.setting, cand, k)
                err, iters, div = _recover_one(spec, A, cand, mu,
                                               derive_seed(seed, "advrun", r, t))
                total_iters += iters
                if not div and err > best_err:
                    best_err, best_x = err, cand
                else:
                    step *= 0.7
    if best_x is None:
        return float("nan"), None, total_iters, True
    return best_err, best_x, total_iters, any_div


def _signal_feasible(setting, w, k):
    from raicpgd.constraints import hard_threshold
    if setting == "a" or setting == "b":
        v = hard_threshold(w, k)
        nv = np.linalg.norm(v)
        v = v / nv if nv > 0 else v
        if setting == "b":
            s = np.abs(v[np.abs(v) > 0])
            if s.size and np.sum(s) > C_STAR * math.sqrt(k):
                # shrink toward the dominant coordinate to restore l1 slack
                j = int(np.argmax(np.abs(v)))
                v = 0.5 * v
                v[j] += 0.5 * np.sign(v[j]) if v[j] != 0 else 0.5
                v = v / np.linalg.norm(v)
        return v
    return _l1_sphere_project(w, math.sqrt(k))


def run_sweep(spec: ExperimentSpec, threads: int = 0) -> list:
    """Execute the full grid; records come back in canonical order
    (grid-major, trial-minor) regardless of execution schedule."""
    mu_cache = {}

    def mu_for(link):
        key = (link.variant, link.param)
        if key not in mu_cache:
            mu_cache[key] = compute_mu(link).mu
        return mu_cache[key]

    tasks = []
    for gi, (n, k, m) in enumerate(spec.grid):
        for trial in range(spec.trials):
            tasks.append((gi, n, k, m, trial,
                          derive_seed(spec.master_seed, gi, trial)))

    def run_task(task):
        gi, n, k, m, trial, seed = task
        t0 = time.perf_counter()
        A = gaussian_ensemble(m, n, derive_seed(seed, "ensemble"))
        mu = mu_for(spec.link) if spec.op.variant == "scaled-l2" else 1.0
        err, _, iters, div = estimate_uniform_error(spec, A, mu, seed, k=k)
        wall = (time.perf_counter() - t0) * 1e3
        return TrialRecord(
            experiment_id=spec.experiment_id, setting=spec.setting,
            link=spec.link.variant, n=n, k=k, m=m, trial=trial,
            signal_id=spec.signals_per_trial - 1,
            corruption=spec.corruption.variant,
            corruption_param=spec.corruption.param,
            iters=iters, final_error=err, diverged=div, seed=seed,
            wall_ms=wall,
        )

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    order = {t[-1]: i for i, t in enumerate(tasks)}
    results.sort(key=lambda r: order[r.seed])
    return results


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def records_to_csv(records, header_comments=()) -> str:
    """Serialize trial records; wall_ms is zeroed so identical specs give
    byte-identical files (real timings live on the in-memory records)."""
    buf = io.StringIO()
    for c in header_comments:
        buf.write(f"# {c}\n")
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in records:
        row = [r.experiment_id, r.setting, r.link, r.n, r.k, r.m, r.trial,
               r.signal_id, r.corruption, r.corruption_param, r.iters,
               r.final_error, r.diverged, r.seed, 0.0]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r2: float


def fit_loglog_slope(points) -> SlopeFit:
    """Least squares of log(error) on log(m)."""
    pts = [(float(m), float(e)) for m, e in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(m <= 0 or e <= 0 for m, e in pts):
        raise ValueError("all points must be positive")
    lx = np.log([m for m, _ in pts])
    ly = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - np.mean(ly)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return SlopeFit(float(slope), float(intercept), r2)


def preset_spec(name: str, **overrides) -> ExperimentSpec:
    """Canonical sweeps; overrides patch any ExperimentSpec field."""
    presets = {
        "one-bit-a": dict(
            experiment_id="one-bit-a", setting="a",
            link=Link("sign"), cset=ConstraintSet("sigma-k", 4),
            solver=SolverConfig(eta=None, max_iters=60, normalize=True),
            op=GradientOp("scaled-l2"),
            grid=tuple((512, 4, m) for m in (250, 500, 1000, 2000, 4000, 8000)),
            trials=30, signals_per_trial=20,
        ),
        "modulo-a": dict(
            experiment_id="modulo-a", setting="a",
            link=Link("modulo", 1.0), cset=ConstraintSet("sigma-k", 4),
            solver=SolverConfig(eta=None, max_iters=80, normalize=False),
            op=GradientOp("scaled-l2"),
            grid=tuple((256, 4, m) for m in (1000, 2000, 4000, 8000, 16000)),
            trials=10, signals_per_trial=10,
        ),
        "nbiht": dict(
            experiment_id="nbiht", setting="a",
            link=Link("sign"), cset=ConstraintSet("sigma-k", 2),
            solver=SolverConfig(eta=math.sqrt(2 * math.pi), max_iters=120,
                                normalize=True),
            op=GradientOp("relu"),
            grid=tuple((256, 2, m) for m in (2000, 4000, 8000, 16000, 32000)),
            trials=10, signals_per_trial=10,
        ),
        "noisy-cs": dict(
            experiment_id="noisy-cs", setting="a",
            link=Link("identity"), cset=ConstraintSet("sigma-k", 3),
            solver=SolverConfig(eta=None, max_iters=120, normalize=False),
            op=GradientOp("scaled-l2"),
            grid=tuple((128, 3, m) for m in (500, 2000, 8000)),
            trials=10, signals_per_trial=5,
            corruption=CorruptionSpec("l2-budget", 5.0, "top-margin"),
        ),
    }
    if name not in presets:
        raise ValueError(f"unknown preset {name!r}; have {sorted(presets)}")
    cfg = presets[name]
    cfg.update(overrides)
    return ExperimentSpec(**cfg)
