"""Top-level acceptance checks, one test per claim.

Each test prints a single [PASS]/[FAIL] line with the measured quantity and
its tolerance, asserts the claim at that tolerance, and asserts its runtime
budget. Everything is seeded; reruns produce identical numbers apart from
wall time.
"""

import time

import numpy as np
import pytest

from snspp.baselines import BaselineConfig, adagrad_run, prox_gd_run, saga_run, svrg_run
from snspp.data import synth_student_t
from snspp.diagnostics import estimate_optimum, fnat, verify_inexactness
from snspp.driver import SamplerState, SnsppConfig, sample_batch, snspp_run
from snspp.losses import Logistic, Squared, StudentT, student_t_dual_root
from snspp.model import (
    Problem,
    batch_gradient,
    build_problem,
    derive_constants,
    full_gradient,
    objective,
)
from snspp.regularizers import make_regularizer
from snspp.subsolver import (
    NewtonParams,
    SubproblemContext,
    eval_U,
    eval_V,
    solve_subproblem,
)

# frozen calibration constant: worst observed value of the decay statistic
# across the 10 seeds was 3.95, kept with a 3x safety margin
WEAKLY_CONVEX_CAP = 12.0


def report(ok, label, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def logistic_instance(rng, N, n, lam=0.02, reg="l1", ridge=0.0, scale=1.0):
    A = scale * rng.standard_normal((N, n))
    w = rng.standard_normal(n) / np.sqrt(n)
    y = np.where(A @ w + 0.3 * scale * rng.standard_normal(N) >= 0, 1.0, -1.0)
    return build_problem(A, y, "logistic", reg_kind=reg, lam=lam, ridge=ridge)


def student_instance(rng, N, n, lam=0.02):
    A = rng.standard_normal((N, n))
    t = rng.standard_normal(N)
    return Problem(A, StudentT(t, nu=1.0), make_regularizer("l1", lam=lam))


def random_context(rng, p, b, alpha=None, spread=0.3):
    S = np.sort(rng.choice(p.N, size=b, replace=False))
    x = rng.standard_normal(p.n) / np.sqrt(p.n)
    a = alpha if alpha is not None else 1.0 / max(p.L, 1.0)
    ctx = SubproblemContext(p, x, np.zeros(p.n), a, S)
    xi = ctx.cold_start() + spread * rng.uniform(-1.0, 1.0, size=b)
    if not p.loss.in_domain(xi):
        xi = ctx.cold_start()
    return ctx, xi


def test_dual_gradient_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for i in range(50):
        n = int(rng.integers(4, 21))
        b = int(rng.integers(2, 9))
        N = max(b, int(rng.integers(b, 25)))
        p = (logistic_instance(rng, N, n) if i % 2 == 0
             else student_instance(rng, N, n))
        ctx, xi = random_context(rng, p, b)
        v = eval_V(ctx, xi)
        h = 1e-6
        g = np.empty(b)
        for j in range(b):
            e = np.zeros(b)
            e[j] = h
            g[j] = (eval_U(ctx, xi + e) - eval_U(ctx, xi - e)) / (2 * h)
        rel = np.linalg.norm(v - g) / np.linalg.norm(v)
        worst = max(worst, rel)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-5 and dt <= 5.0
    report(ok, "dual gradient identity",
           f"50 contexts, worst rel FD error {worst:.3e} (tol 1e-05), {dt:.2f}s")
    assert worst <= 1e-5
    assert dt <= 5.0


def fixed_point_step(p, x, alpha, tol=1e-14, max_iter=50_000):
    """Dense oracle for the implicit step: y = prox(x - alpha grad f(y))."""
    y = x.copy()
    for _ in range(max_iter):
        y_new = p.regularizer.prox(x - alpha * full_gradient(p, y), alpha)
        if np.linalg.norm(y_new - y) <= tol:
            return y_new
        y = y_new
    return y


def test_exactness_reduction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    p = logistic_instance(rng, N=6, n=10, lam=0.03)
    alpha = 0.5 / p.L
    cfg = SnsppConfig(
        alpha=alpha, batch_size=p.N, m=1, n_outer=10, sampling="without",
        eps_sub=1e-12, seed=0, keep_iterates=True,
    )
    res = snspp_run(p, cfg)
    path = res.iterates + [res.x]
    worst = 0.0
    x = path[0]
    for k in range(10):
        ref = fixed_point_step(p, x, alpha)
        worst = max(worst, float(np.max(np.abs(path[k + 1] - ref))))
        x = path[k + 1]
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and dt <= 5.0
    report(ok, "exactness reduction (b=N)",
           f"10 steps, worst abs step error {worst:.3e} (tol 1e-08), {dt:.2f}s")
    assert worst <= 1e-8
    assert dt <= 5.0


def test_superlinear_inner_convergence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    # 1e-9 stops before residuals saturate at rounding noise (~1e-16),
    # which would flatten the final ratio and hide the contraction
    params = NewtonParams(eps_sub=1e-9, max_iter=60)
    hits = 0
    for _ in range(50):
        p = logistic_instance(rng, N=40, n=12, lam=0.01)
        ctx, _ = random_context(rng, p, b=8, alpha=0.8 / p.L, spread=0.0)
        res = solve_subproblem(ctx, params, ctx.cold_start())
        r = [v for v in res.stats.residuals]
        if len(r) < 4:
            continue
        tail = r[-4:]
        ratios = [tail[i + 1] / tail[i] for i in range(3)]
        if ratios[0] > ratios[1] > ratios[2] and ratios[2] <= 0.1:
            hits += 1
    dt = time.perf_counter() - t0
    ok = hits >= 45 and dt <= 10.0
    report(ok, "superlinear inner convergence",
           f"{hits}/50 instances with strictly decreasing final ratios, "
           f"last <= 0.1 (need >= 45), {dt:.2f}s")
    assert hits >= 45
    assert dt <= 10.0


def test_inexactness_bounds():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    held = 0
    for i in range(100):
        n = int(rng.integers(3, 16))
        b = int(rng.integers(2, 9))
        N = max(b, int(rng.integers(b, 20)))
        if i % 3 == 0:
            p = logistic_instance(rng, N, n)
        elif i % 3 == 1:
            p = student_instance(rng, N, n)
        else:
            A = rng.standard_normal((N, n))
            p = Problem(A, Squared(rng.standard_normal(N)),
                        make_regularizer("l1", lam=0.02))
        ctx, _ = random_context(rng, p, b, spread=0.0)
        rep = verify_inexactness(p, ctx, eps_sub=1e-3)
        held += bool(rep.passed)
    dt = time.perf_counter() - t0
    ok = held == 100 and dt <= 10.0
    report(ok, "inexactness bounds",
           f"{held}/100 instances satisfy both bounds at eps=1e-3, {dt:.2f}s")
    assert held == 100
    assert dt <= 10.0


def test_variance_bound():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    N, n, b, draws = 20, 5, 5, 10_000
    A = rng.standard_normal((N, n))
    p = Problem(A, Squared(rng.standard_normal(N)), make_regularizer("zero"))
    x_t = rng.standard_normal(n)  # snapshot
    x = x_t + 0.5 * rng.standard_normal(n)

    # per-sample gradient rows let every draw reduce to a row average
    gx = A * p.loss.grad(A @ x)[:, None]
    gt = A * p.loss.grad(A @ x_t)[:, None]
    R = gx - gt
    offset = full_gradient(p, x_t) - full_gradient(p, x)

    idx_w = rng.integers(0, N, size=(draws, b))
    err_w = R[idx_w].mean(axis=1) + offset
    sq_w = np.einsum("ij,ij->i", err_w, err_w)
    idx_wo = np.argsort(rng.random((draws, N)), axis=1)[:, :b]
    err_wo = R[idx_wo].mean(axis=1) + offset
    sq_wo = np.einsum("ij,ij->i", err_wo, err_wo)

    mean_w, se_w = sq_w.mean(), sq_w.std(ddof=1) / np.sqrt(draws)
    mean_wo, se_wo = sq_wo.mean(), sq_wo.std(ddof=1) / np.sqrt(draws)
    bound = p.L_bar**2 / b * float(np.dot(x - x_t, x - x_t))
    se_diff = float(np.hypot(se_w, se_wo))

    ok_bound = mean_w <= bound + 3 * se_w
    ok_order = mean_wo <= mean_w + 3 * se_diff
    dt = time.perf_counter() - t0
    ok = ok_bound and ok_order and dt <= 20.0
    report(ok, "variance bound",
           f"MC {mean_w:.4f} <= bound {bound:.4f} + 3se {3 * se_w:.4f}; "
           f"without {mean_wo:.4f} <= with {mean_w:.4f} + 3se, {dt:.2f}s")
    assert ok_bound
    assert ok_order
    assert dt <= 20.0


def test_qlinear_strongly_convex_rate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    # rows scaled by 0.1 keep L and L_bar small, so the admissible step
    # 1/(L + sqrt(2/b) m L_bar) is large enough for a visible contraction
    p = logistic_instance(rng, N=200, n=50, lam=0.01, reg="l1_plus_ridge",
                          ridge=0.1, scale=0.1)
    opt = estimate_optimum(p, tol=1e-12, max_iter=300_000)
    assert opt.converged
    b, m, s_max = 10, 10, 15
    alpha = derive_constants(p, b, m).alpha_qlinear
    sq = np.zeros((20, s_max))
    for seed in range(20):
        cfg = SnsppConfig(
            alpha=alpha, batch_size=b, m=m, n_outer=s_max, seed=seed,
            tol_mode="adaptive", delta0=0.1, tol_decay=0.5,
            keep_iterates=True,
        )
        res = snspp_run(p, cfg)
        path = res.iterates + [res.x]
        for s in range(1, s_max + 1):
            d = path[s * m] - opt.x_star
            sq[seed, s - 1] = float(np.dot(d, d))
    means = sq.mean(axis=0)
    s_vals = np.arange(1, s_max + 1)
    slope = float(np.polyfit(s_vals, np.log(means), 1)[0])
    dt = time.perf_counter() - t0
    ok = slope <= np.log(0.9) and dt <= 60.0
    report(ok, "q-linear strongly convex rate",
           f"LS slope of log E||anchor - x*||^2 = {slope:.4f} "
           f"(limit {np.log(0.9):.4f}), {dt:.1f}s")
    assert slope <= np.log(0.9)
    assert dt <= 60.0


def test_weakly_convex_decay():
    t0 = time.perf_counter()
    m, n_outer = 10, 40
    worst = 0.0
    for seed in range(10):
        ds, _ = synth_student_t(n=500, N=400, nnz=20, seed=seed)
        p = build_problem(ds.features, ds.targets, "student_t",
                          reg_kind="l1", lam=0.001, nu=1.0)
        # tuned constant step; beyond ~0.2 the inner solver starts aborting
        cfg = SnsppConfig(
            alpha=0.1, batch_size=20, m=m, n_outer=n_outer, seed=seed,
            tol_mode="adaptive", delta0=0.1, tol_decay=0.5,
        )
        res = snspp_run(p, cfg)
        anchors = [r.fnat_norm for r in res.trace if r.k == m - 1]
        assert len(anchors) == n_outer
        best = np.minimum.accumulate(np.asarray(anchors) ** 2)
        for s in range(5, n_outer + 1):
            worst = max(worst, best[s - 1] * m * s)
    dt = time.perf_counter() - t0
    cap = WEAKLY_CONVEX_CAP
    ok = worst <= cap and dt <= 120.0
    report(ok, "weakly convex decay",
           f"max_s (min residual^2) * m * s = {worst:.3f} over 10 seeds "
           f"(cap {cap}), {dt:.1f}s")
    assert worst <= cap
    assert dt <= 120.0


def test_baseline_cross_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(108)
    N, n = 60, 8
    A = rng.standard_normal((N, n))
    t = rng.standard_normal(N)
    p = Problem(A, Squared(t), make_regularizer("l1", lam=0.05))
    opt = estimate_optimum(p, tol=1e-10)
    assert opt.converged and opt.fnat_norm <= 1e-10
    psi_star = opt.psi_star
    stop = dict(psi_star=psi_star, stop_rel=1e-4, budget_epochs=4000)

    results = {}
    sn_cfg = SnsppConfig(
        alpha=derive_constants(p, 8, 10).alpha_hat, batch_size=8, m=10,
        n_outer=10**9, seed=0, eps_sub=1e-6, **stop,
    )
    results["snspp"] = snspp_run(p, sn_cfg)
    results["svrg"] = svrg_run(p, BaselineConfig(
        method="svrg", alpha=0.3 / p.L_bar, batch=4, seed=0, **stop))
    results["saga"] = saga_run(p, BaselineConfig(
        method="saga", alpha=0.3 / p.L_bar, batch=4, seed=0, **stop))
    results["adagrad"] = adagrad_run(p, BaselineConfig(
        method="adagrad", alpha=0.5, batch=N, sampling="without", seed=0, **stop))
    results["prox_gd"] = prox_gd_run(p, BaselineConfig(
        method="prox_gd", alpha=1.0 / p.L, **stop))

    bad = []
    for name, res in results.items():
        psi = objective(p, res.x)
        if res.status != "reached_threshold" or psi > 1.0001 * psi_star:
            bad.append(f"{name}({res.status}, psi={psi:.6g})")
    dt = time.perf_counter() - t0
    ok = not bad and dt <= 60.0
    report(ok, "baseline cross-check",
           ("all 5 methods reached psi <= 1.0001 psi*" if not bad
            else "failed: " + ", ".join(bad)) + f", {dt:.1f}s")
    assert not bad
    assert dt <= 60.0


def test_oracle_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(109)
    checks = []

    # conjugate gradient of the shifted loss inverts its gradient
    log = Logistic()
    zs = rng.uniform(-6.0, 6.0, 200)
    checks.append(("logistic roundtrip",
                   float(np.max(np.abs(log.conj_grad(log.grad(zs)) - zs)))))
    sq = Squared(rng.standard_normal(200))
    idx = np.arange(200)
    checks.append(("squared roundtrip",
                   float(np.max(np.abs(sq.conj_grad(sq.grad(zs, idx), idx) - zs)))))
    st = StudentT(rng.standard_normal(200), nu=1.5)
    xs = st.grad(zs, idx) + st.gamma * zs  # slope of the shifted loss at zs
    back = st.conj_grad(xs, idx)
    checks.append(("student-t roundtrip", float(np.max(np.abs(back - zs)))))

    # cubic solver stationarity everywhere
    worst_halley = 0.0
    for _ in range(500):
        xq = float(rng.uniform(-20, 20))
        bq = float(rng.uniform(-5, 5))
        nu = float(rng.uniform(0.5, 8.0))
        gam = 1.0 / (2.0 * nu) * float(rng.uniform(1.01, 4.0))
        zq = student_t_dual_root(xq, bq, gam, nu)
        resid = abs(2.0 * (zq - bq) / (nu + (zq - bq) ** 2) + gam * zq - xq)
        worst_halley = max(worst_halley, resid / (1.0 + abs(xq)))
    checks.append(("cubic stationarity", worst_halley))

    # prox closed forms and Jacobian range
    x = rng.standard_normal(300)
    tstep = 0.7
    l1 = make_regularizer("l1", lam=0.3)
    soft = np.sign(x) * np.maximum(np.abs(x) - 0.3 * tstep, 0.0)
    checks.append(("l1 prox", float(np.max(np.abs(l1.prox(x, tstep) - soft)))))
    lr = make_regularizer("l1_plus_ridge", lam=0.3, ridge=0.2)
    ref = soft / (1.0 + 0.2 * tstep)
    checks.append(("l1+ridge prox", float(np.max(np.abs(lr.prox(x, tstep) - ref)))))
    jac_ok = True
    for reg in (l1, lr, make_regularizer("zero")):
        d = reg.prox_jacobian(x, tstep)
        jac_ok &= bool(np.all(d >= 0.0) and np.all(d <= 1.0))
    dt = time.perf_counter() - t0

    tol = {"cubic stationarity": 1e-10}
    bad = [name for name, v in checks if v > tol.get(name, 1e-8)]
    ok = not bad and jac_ok and dt <= 10.0
    detail = ", ".join(f"{name} {v:.2e}" for name, v in checks)
    report(ok, "oracle invariants", detail + f", jacobian in [0,1]: {jac_ok}, {dt:.2f}s")
    assert not bad, bad
    assert jac_ok
    assert dt <= 10.0
