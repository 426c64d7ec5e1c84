"""End-to-end acceptance gate: one test per headline claim, each printing a
single PASS/FAIL line.  Scales are chosen so the whole module runs on a
laptop; rate exponents and exact small-instance identities are checked, not
large-scale constants.

The modulo-recovery test is expected to fail and is marked xfail: the
prescribed scaling mu = 1 does not equal E[g m_lambda(g)] at lambda = 1
(the true value is 1 - 4*lambda*sum_j pdf((2j-1)*lambda) ~ 0.0144), so the
population fixed point of the iteration sits near the origin and the error
stalls at ~ ||x||.  The test runs the experiment honestly and reports what
it measures.
"""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from raicpgd.constraints import (
    ConstraintSet,
    dual_norm_cone,
    dual_norm_convex,
    hard_threshold,
    project,
    project_l1_ball,
    projection_lemma_check,
)
from raicpgd.core import derive_seed, gaussian_ensemble, rng_from_seed
from raicpgd.experiments import (
    CorruptionSpec,
    fit_loglog_slope,
    preset_spec,
    records_to_csv,
    run_sweep,
)
from raicpgd.links import Link, apply_link_batch, compute_mu, compute_rho
from raicpgd.raic import certify_raic, multiplier_process_sup, sample_sparse_sphere
from raicpgd.solvers import GradientOp, SolverConfig, gradient, pgd_run, predict_envelope

ARTIFACTS = Path(__file__).resolve().parent.parent / "artifacts"


def _report(num, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
    return ok


def _median_errors(records):
    """Per-m median over trials of the per-trial worst-signal error."""
    out = {}
    for m in sorted({r.m for r in records}):
        vals = [r.final_error for r in records if r.m == m and not r.diverged]
        out[m] = float(np.median(vals))
    return out


def test_criterion_01_one_bit_iht_rate():
    t0 = time.time()
    spec = preset_spec("one-bit-a", master_seed=20260826)
    records = run_sweep(spec, threads=4)
    med = _median_errors(records)
    fit = fit_loglog_slope(list(med.items()))
    elapsed = time.time() - t0

    ARTIFACTS.mkdir(exist_ok=True)
    (ARTIFACTS / "one_bit_iht.csv").write_text(
        records_to_csv(records, header_comments=("one-bit IHT rate sweep",)))
    (ARTIFACTS / "one_bit_slope.json").write_text(json.dumps(
        {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
         "medians": med}, indent=2))

    ok = -0.65 <= fit.slope <= -0.35 and elapsed < 600
    assert _report(1, ok, f"1-bit IHT slope {fit.slope:.3f} in [-0.65,-0.35], "
                          f"{elapsed:.0f}s < 600s")


@pytest.mark.xfail(strict=True, reason="prescribed modulo scaling mu=1 is not "
                   "the true E[g m_lambda(g)] at lambda=1; recovery stalls")
def test_criterion_02_modulo_rate():
    spec = preset_spec("modulo-a", trials=6, signals_per_trial=6,
                       master_seed=20260826)
    records = run_sweep(spec, threads=4)
    med = _median_errors(records)
    fit = fit_loglog_slope(list(med.items()))
    final = med[max(med)]
    ok = -0.70 <= fit.slope <= -0.30 and final < 0.15
    assert _report(2, ok, f"modulo slope {fit.slope:.3f}, final error {final:.3f}")


def test_criterion_03_nbiht_rate():
    spec = preset_spec("nbiht", trials=6, signals_per_trial=6,
                       master_seed=20260826)
    records = run_sweep(spec, threads=4)
    med = _median_errors(records)
    fit = fit_loglog_slope(list(med.items()))
    ok = -1.25 <= fit.slope <= -0.70
    assert _report(3, ok, f"NBIHT slope {fit.slope:.3f} in [-1.25,-0.70]")


def test_criterion_04_noisy_cs_band():
    beta = 5.0
    spec = preset_spec("noisy-cs", trials=8, signals_per_trial=3,
                       corruption=CorruptionSpec("l2-budget", beta, "top-margin"),
                       master_seed=20260826)
    records = run_sweep(spec, threads=4)
    med = _median_errors(records)
    ratios = [med[m] / (beta / math.sqrt(m)) for m in (500, 2000, 8000)]
    band = max(ratios) / min(ratios)
    ok = band <= 3.0
    assert _report(4, ok, f"noisy-CS ratio band {band:.2f} <= 3 "
                          f"(ratios {[round(r, 3) for r in ratios]})")


def test_criterion_05_bit_flip_robustness():
    etas = (0.005, 0.01, 0.02, 0.05)
    meds = {}
    for eta in (0.0,) + etas:
        cor = (CorruptionSpec("bit-flips", eta, "largest-margin")
               if eta else CorruptionSpec())
        spec = preset_spec("nbiht", grid=((256, 2, 4000),), trials=8,
                           signals_per_trial=4, corruption=cor,
                           master_seed=20260826)
        records = run_sweep(spec, threads=4)
        meds[eta] = float(np.median([r.final_error for r in records
                                     if not r.diverged]))
    seq = [meds[e] for e in (0.0,) + etas]
    monotone = all(a <= b + 1e-12 for a, b in zip(seq, seq[1:]))
    bounded = all(meds[e] <= meds[0.0] + 6 * e * math.sqrt(math.log(1 / e))
                  for e in etas)
    ok = monotone and bounded
    assert _report(5, ok, f"bit-flip medians {[f'{v:.4f}' for v in seq]} "
                          f"monotone={monotone} bounded={bounded}")


def test_criterion_06_raic_certificate_and_envelope():
    n, k, m = 256, 4, 4000
    link = Link("sign")
    mu = compute_mu(link).mu
    eta = 1.0 / mu**2
    cset = ConstraintSet("sigma-k", k)
    A = gaussian_ensemble(m, n, derive_seed(20260826, "raic"))
    cert = certify_raic(A, link, cset, "trajectory", 500, eta=eta, mu=mu,
                        seed=20260826)
    # replay the probed trajectories and compare against the fitted envelope
    per_signal = 25
    n_signals = 500 // per_signal
    cfg = SolverConfig(eta=eta, max_iters=per_signal - 2, stop_tol=0.0)
    op = GradientOp("scaled-l2", mu=mu)
    dominated = True
    worst_gap = math.inf
    rng = rng_from_seed(20260826)
    for i in range(n_signals):
        x = sample_sparse_sphere(n, k, rng)
        y = apply_link_batch(link, A.matrix @ x)
        traj = pgd_run(cfg, A, y, cset, op, truth=x)
        for t, err in enumerate(traj.errors):
            env = predict_envelope(cert.mu1_hat, cert.mu2_hat, 0.0,
                                   traj.errors[0], t)
            worst_gap = min(worst_gap, env + 1e-9 - err)
            if err > env + 1e-9:
                dominated = False
    ok = cert.mu1_hat < 0.5 and dominated
    assert _report(6, ok, f"RAIC mu1_hat={cert.mu1_hat:.3f} < 0.5, "
                          f"envelope dominates (min slack {worst_gap:.2e})")


def test_criterion_07_scaling_identities():
    mu_sign = compute_mu(Link("sign")).mu
    d1 = abs(mu_sign - math.sqrt(2 / math.pi))
    d2 = abs(compute_mu(Link("modulo", 1.0)).mu - 1.0)
    d3 = compute_rho(Link("sign"), 1.0, math.sqrt(2 / math.pi))
    ok = d1 < 1e-8 and d2 < 1e-6 and d3 < 1e-9
    assert _report(7, ok, f"mu(sign) err {d1:.1e} < 1e-8, mu(modulo,1) err "
                          f"{d2:.1e} < 1e-6, rho(sign,1) {d3:.1e} < 1e-9")


def test_criterion_08_oracle_equivalence():
    import cvxpy
    rng = np.random.default_rng(88)

    ht_bad = 0
    for _ in range(1000):
        n = int(rng.integers(3, 11))
        k = int(rng.integers(1, n))
        w = rng.standard_normal(n)
        v = hard_threshold(w, k)
        best = min(
            np.linalg.norm(w - np.where(np.isin(np.arange(n), S), w, 0.0))
            for S in (list(c) for c in itertools.combinations(range(n), k)))
        if abs(np.linalg.norm(w - v) - best) > 1e-12:
            ht_bad += 1

    l1_bad = 0
    worst_l1 = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 11))
        w = 3 * rng.standard_normal(n)
        r = float(rng.uniform(0.2, 3.0))
        ours = project_l1_ball(w, r)
        v = cvxpy.Variable(n)
        cvxpy.Problem(cvxpy.Minimize(cvxpy.sum_squares(v - w)),
                      [cvxpy.norm1(v) <= r]).solve(
            solver=cvxpy.CLARABEL, tol_feas=1e-12, tol_gap_abs=1e-12,
            tol_gap_rel=1e-12)
        dev = float(np.max(np.abs(ours - np.asarray(v.value))))
        worst_l1 = max(worst_l1, dev)
        if dev > 1e-6:
            l1_bad += 1

    dc_bad = 0
    for _ in range(1000):
        n = int(rng.integers(3, 11))
        k = int(rng.integers(1, 4))
        w = rng.standard_normal(n)
        kk = min(2 * k, n)
        best = max(math.sqrt(sum(w[i] ** 2 for i in S))
                   for S in itertools.combinations(range(n), kk))
        if abs(dual_norm_cone(w, k).value - best) > 1e-12:
            dc_bad += 1

    cv_bad = 0
    worst_rel = 0.0
    cset = ConstraintSet("l1-ball", 1.0)
    for _ in range(30):
        x = project(cset, 0.6 * rng.standard_normal(3))
        w = rng.standard_normal(3)
        phi = float(rng.uniform(0.1, 1.0))
        v = cvxpy.Variable(3)
        prob = cvxpy.Problem(cvxpy.Maximize(w @ v),
                             [cvxpy.norm2(v) <= phi,
                              cvxpy.norm1(v + x) <= cset.param])
        prob.solve(solver=cvxpy.CLARABEL)
        ref = float(prob.value)
        asc = dual_norm_convex(w, cset, x, phi).value
        rel = abs(asc - ref) / max(abs(ref), 1e-4)
        worst_rel = max(worst_rel, rel)
        if rel > 1e-3 or asc > ref + 1e-6:
            cv_bad += 1

    ok = ht_bad == 0 and l1_bad == 0 and dc_bad == 0 and cv_bad == 0
    assert _report(8, ok, f"oracle mismatches: threshold {ht_bad}/1000, "
                          f"l1-proj {l1_bad}/1000 (worst {worst_l1:.1e}), "
                          f"dual-cone {dc_bad}/1000, "
                          f"dual-convex {cv_bad}/30 (worst rel {worst_rel:.1e})")


def test_criterion_09_projection_lemma_audit():
    rng = np.random.default_rng(99)
    cset = ConstraintSet("l1-ball", 1.0)
    violations = 0
    for _ in range(10_000):
        z = project(cset, rng.standard_normal(4) * rng.uniform(0.2, 2.0))
        w = z + rng.standard_normal(4) * rng.uniform(0.01, 2.0)
        t = float(rng.uniform(0.05, 1.5))
        holds, _ = projection_lemma_check(cset, z, w, t)
        violations += not holds
    ok = violations == 0
    assert _report(9, ok, f"projection lemma: {violations}/10000 violations")


def test_criterion_10_multiplier_process_decay():
    link = Link("sign")
    mu = compute_mu(link).mu
    rng = rng_from_seed(20260826)
    net = [sample_sparse_sphere(128, 4, rng) for _ in range(50)]
    pts = []
    for m in (500, 2000, 8000):
        A = gaussian_ensemble(m, 128, derive_seed(20260826, "mult", m))
        pts.append((m, multiplier_process_sup(A, link, mu, net, 4)))
    fit = fit_loglog_slope(pts)
    ok = -0.65 <= fit.slope <= -0.35
    assert _report(10, ok, f"multiplier-process slope {fit.slope:.3f} in "
                           f"[-0.65,-0.35]")


def test_criterion_11_gradient_vs_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        m, n = int(rng.integers(5, 40)), int(rng.integers(2, 12))
        A = gaussian_ensemble(m, n, int(rng.integers(1 << 30)))
        y = rng.standard_normal(m)
        u = rng.standard_normal(n)
        mu = float(rng.uniform(0.3, 2.0))

        def F(v):
            r = mu * (A.matrix @ v) - y
            return 0.5 / m * float(r @ r)

        g = gradient(GradientOp("scaled-l2", mu), u, A, y)
        fd = np.zeros(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1e-6
            fd[i] = (F(u + e) - F(u - e)) / 2e-6
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    ok = worst < 1e-5
    assert _report(11, ok, f"scaled-l2 gradient vs finite differences, worst "
                           f"relative error {worst:.2e} < 1e-5")
