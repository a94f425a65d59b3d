"""Outer/inner loop of the variance-reduced stochastic proximal point method.

Each outer iteration s freezes a snapshot x_tilde and its full gradient.
Each inner iteration k samples a batch S_k, forms the variance-reduced
shift

    v^k    = grad f(x_tilde) - grad f_{S_k}(x_tilde)
    vhat^k = alpha_k (v^k - M_{S_k} x^k),

and hands (x^k, alpha_k, S_k, -vhat^k, eps_k) to the semismooth Newton
subproblem solver, whose primal recovery is the next iterate. The
snapshot is refreshed per Option I (last iterate) or Option II (inner
average). Dual warm starts are cached per sample index.

Full-batch sampling makes v^k vanish bit-exactly because batch gradients
accumulate in sorted index order (see model.batch_gradient), so the
method reduces to the deterministic implicit proximal iteration.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import Stopwatch, TraceRecord, trace_metrics
from .model import weak_convexity_matvec
from .subsolver import (
    NewtonParams,
    SubproblemContext,
    SubproblemError,
    solve_subproblem,
)

__all__ = [
    "SnsppConfig",
    "SamplerState",
    "sample_batch",
    "SnapshotRecord",
    "anchor_update",
    "shift_vector",
    "tolerance_schedule",
    "RunResult",
    "snspp_run",
]

_DIVERGENCE_NORM = 1e10


@dataclass
class SnsppConfig:
    """Run configuration: schedules, inner length, snapshot option, seed.

    step_schedule / batch_schedule, when given, are callables (s, k) -> value
    overriding the constant alpha / batch_size.
    """

    alpha: float
    batch_size: int
    m: int = 10
    n_outer: int = 10
    option: str = "I"
    sampling: str = "with"
    seed: int = 0
    eps_sub: float = 1e-3
    tol_mode: str = "constant"
    delta0: float = 0.1
    tol_decay: float = 0.5
    newton: NewtonParams = field(default_factory=NewtonParams)
    x0: np.ndarray = None
    warmup: str = "none"
    budget_epochs: float = None
    psi_star: float = None
    stop_rel: float = None
    step_schedule: object = None
    batch_schedule: object = None
    keep_iterates: bool = False
    return_xpi: bool = False


class SamplerState:
    """Counter-based sampling stream, deterministic given seed and call count."""

    def __init__(self, seed, mode="with"):
        if mode not in ("with", "without"):
            raise ValueError("sampling mode must be 'with' or 'without'")
        self.rng = np.random.Generator(np.random.Philox(seed))
        self.mode = mode
        self.calls = 0


def sample_batch(state, N, b):
    """Draw a b-tuple with uniform marginals over [N]."""
    if b < 1:
        raise ValueError("batch size must be at least 1")
    if state.mode == "without":
        if b > N:
            raise ValueError("batch size exceeds N for sampling without replacement")
        out = state.rng.permutation(N)[:b]
    else:
        out = state.rng.integers(0, N, size=b)
    state.calls += 1
    return out


@dataclass
class SnapshotRecord:
    """Snapshot point with its full gradient and per-sample derivatives."""

    x: np.ndarray
    grad: np.ndarray
    deriv: np.ndarray


def anchor_update(p, x_tilde):
    """Full gradient at the snapshot plus cached scalar derivatives, so each
    later batch term costs only one row combine."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    z = p.A @ x_tilde
    deriv = p.loss.grad(z)
    grad = np.asarray(p.A.T @ deriv).ravel() / p.N
    return SnapshotRecord(x=x_tilde.copy(), grad=grad, deriv=deriv)


def _snapshot_batch_gradient(p, rec, idx):
    """grad f_S(x_tilde) from cached derivatives; idx must be sorted."""
    if idx.size == p.N and idx[0] == 0 and idx[-1] == p.N - 1 and np.all(np.diff(idx) == 1):
        # the full tuple reproduces the snapshot gradient exactly
        return rec.grad
    sub = p.A[idx]
    return np.asarray(sub.T @ rec.deriv[idx]).ravel() / idx.size


def shift_vector(p, batch, x_k, v_k, alpha):
    """vhat = alpha (v - M_S x) with M_S the batch weak-convexity matrix."""
    return alpha * (v_k - weak_convexity_matvec(p, batch, x_k))


def tolerance_schedule(mode, s, fnat_norm, eps_sub=1e-3, delta0=0.1, decay=0.5):
    """Subproblem tolerance for outer iteration s.

    'constant' returns eps_sub; 'adaptive' returns delta0 * decay^s times
    the natural-residual norm at the snapshot (a stationary snapshot thus
    demands exact solves).
    """
    if mode == "constant":
        return float(eps_sub)
    if mode == "adaptive":
        return float(delta0 * decay**s * fnat_norm)
    raise ValueError(f"unknown tolerance mode: {mode!r}")


@dataclass
class RunResult:
    x: np.ndarray
    trace: list
    status: str
    grad_evals: int
    wall_time_s: float
    x_pi: np.ndarray = None
    iterates: list = None


def _validate(p, cfg):
    errs = []
    if cfg.alpha <= 0:
        errs.append("alpha must be positive")
    if cfg.batch_size < 1:
        errs.append("batch size must be at least 1")
    if cfg.sampling == "without" and cfg.batch_size > p.N:
        errs.append("batch size exceeds N for sampling without replacement")
    if cfg.m < 1:
        errs.append("inner length m must be at least 1")
    if cfg.option not in ("I", "II"):
        errs.append("option must be 'I' or 'II'")
    if cfg.tol_mode not in ("constant", "adaptive"):
        errs.append("tol_mode must be 'constant' or 'adaptive'")
    if cfg.warmup not in ("none", "saga_epoch", "vr_free_step"):
        errs.append("warmup must be 'none', 'saga_epoch' or 'vr_free_step'")
    if errs:
        raise ValueError("; ".join(errs))


def snspp_run(p, cfg, sink=None, test_fn=None, run_id=None):
    """Execute the method and return the final snapshot plus the full trace.

    sink, when given, receives every TraceRecord as it is produced; test_fn
    fills the optional test-loss column. The wall clock pauses while
    metrics are computed and records are written.
    """
    _validate(p, cfg)
    run_id = run_id or f"snspp-seed{cfg.seed}"
    state = SamplerState(cfg.seed, cfg.sampling)
    x = np.zeros(p.n) if cfg.x0 is None else np.array(cfg.x0, dtype=float, copy=True)
    warm = {}
    cold = p.loss.dual_start()
    trace = []
    iterates = [] if (cfg.keep_iterates or cfg.return_xpi) else None
    clock = Stopwatch()
    evals = 0
    status = None
    budget_evals = None if cfg.budget_epochs is None else cfg.budget_epochs * p.N
    threshold = None
    if cfg.psi_star is not None and cfg.stop_rel is not None:
        threshold = (1.0 + cfg.stop_rel) * cfg.psi_star

    def record(s, k, x_cur, newton_iters, newton_resid):
        # diagnostics run off the clock
        clock.pause()
        psi, res, tloss = trace_metrics(p, x_cur, 1.0, test_fn)
        rec = TraceRecord(
            run_id=run_id,
            method="snspp",
            s=s,
            k=k,
            grad_evals=evals,
            wall_time_s=clock.elapsed,
            objective=psi,
            fnat_norm=res,
            inner_newton_iters=newton_iters,
            inner_residual=newton_resid,
            test_loss=tloss,
        )
        trace.append(rec)
        if sink is not None:
            sink.emit(rec)
        out = None
        if not np.isfinite(psi) or np.linalg.norm(x_cur) > _DIVERGENCE_NORM:
            out = "diverged"
        elif threshold is not None and psi <= threshold:
            out = "reached_threshold"
        elif budget_evals is not None and evals >= budget_evals:
            out = "budget"
        clock.start()
        return out

    def inner_step(x_cur, s, k, rec_snapshot, eps_k):
        nonlocal evals
        b_k = cfg.batch_size if cfg.batch_schedule is None else int(cfg.batch_schedule(s, k))
        a_k = cfg.alpha if cfg.step_schedule is None else float(cfg.step_schedule(s, k))
        S = np.sort(sample_batch(state, p.N, b_k))
        if rec_snapshot is None:
            v_k = np.zeros(p.n)
        else:
            v_k = rec_snapshot.grad - _snapshot_batch_gradient(p, rec_snapshot, S)
        xi0 = np.array([warm.get(int(i), cold) for i in S])
        result = None
        for alpha_try in (a_k, 0.5 * a_k):
            vhat = shift_vector(p, S, x_cur, v_k, alpha_try)
            ctx = SubproblemContext(p, x_cur, -vhat, alpha_try, S)
            try:
                result = solve_subproblem(ctx, replace(cfg.newton, eps_sub=eps_k), xi0)
                break
            except SubproblemError:
                result = None
        if result is None:
            return None
        for pos, i in enumerate(S):
            warm[int(i)] = float(result.xi[pos])
        evals += b_k
        return result

    clock.start()

    if cfg.warmup == "saga_epoch":
        from .baselines import BaselineConfig, saga_run

        wcfg = BaselineConfig(
            method="saga", alpha=cfg.alpha, batch=1, seed=cfg.seed,
            budget_epochs=None, max_steps=p.N, x0=x,
        )
        clock.pause()
        wres = saga_run(p, wcfg)
        clock.add(wres.wall_time_s)
        clock.start()
        x = wres.x
        evals += wres.grad_evals
    elif cfg.warmup == "vr_free_step":
        for k in range(cfg.m):
            res = inner_step(x, 0, k, None, cfg.eps_sub)
            if res is None:
                status = "aborted"
                break
            x = res.x_plus

    if status is None:
        for s in range(cfg.n_outer):
            if budget_evals is not None and evals >= budget_evals:
                status = "budget"
                break
            rec_snapshot = anchor_update(p, x)
            evals += p.N
            fnat_tilde = float(
                np.linalg.norm(x - p.regularizer.prox(x - rec_snapshot.grad, 1.0))
            )
            eps_s = tolerance_schedule(
                cfg.tol_mode, s, fnat_tilde, cfg.eps_sub, cfg.delta0, cfg.tol_decay
            )
            x_sum = np.zeros(p.n)
            for k in range(cfg.m):
                if iterates is not None:
                    iterates.append(x.copy())
                res = inner_step(x, s, k, rec_snapshot, eps_s)
                if res is None:
                    status = "aborted"
                    break
                x = res.x_plus
                x_sum += x
                status = record(s, k, x, res.stats.iterations, res.stats.residual)
                if status is not None:
                    break
            if status == "aborted":
                break
            if cfg.option == "II":
                x = x_sum / cfg.m
            if status is not None:
                break
        else:
            status = "completed"

    clock.pause()
    x_pi = None
    if cfg.return_xpi and iterates:
        x_pi = iterates[int(state.rng.integers(len(iterates)))].copy()
    return RunResult(
        x=x,
        trace=trace,
        status=status or "completed",
        grad_evals=evals,
        wall_time_s=clock.elapsed,
        x_pi=x_pi,
        iterates=iterates if cfg.keep_iterates else None,
    )
