"""Stochastic and deterministic proximal-gradient comparison methods.

All four share the trace schema and epoch accounting of the main driver:
grad_evals counts single-sample derivative evaluations, the wall clock
pauses for metric computation and I/O, and a run ends on budget
exhaustion, an objective threshold, or divergence (||x|| > 1e10).
"""

from dataclasses import dataclass

import numpy as np

from .diagnostics import Stopwatch, TraceRecord, trace_metrics
from .driver import RunResult, SamplerState, anchor_update, sample_batch, _snapshot_batch_gradient

__all__ = [
    "BaselineConfig",
    "svrg_run",
    "saga_run",
    "adagrad_run",
    "prox_gd_run",
]

_DIVERGENCE_NORM = 1e10


@dataclass
class BaselineConfig:
    method: str
    alpha: float
    batch: int = 1
    m: int = None
    delta_ada: float = 1e-8
    seed: int = 0
    sampling: str = "with"
    budget_epochs: float = None
    psi_star: float = None
    stop_rel: float = None
    x0: np.ndarray = None
    max_steps: int = None

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("step must be positive")
        if self.batch < 1:
            raise ValueError("batch size must be at least 1")
        if self.delta_ada <= 0:
            raise ValueError("adagrad damping must be positive")
        has_threshold = self.psi_star is not None and self.stop_rel is not None
        if self.budget_epochs is None and self.max_steps is None and not has_threshold:
            raise ValueError(
                "no stopping rule: set budget_epochs, max_steps, or psi_star+stop_rel"
            )


class _Recorder:
    """Shared bookkeeping: clock, trace buffer, stop rules."""

    def __init__(self, p, cfg, method, sink, test_fn, run_id):
        self.p = p
        self.sink = sink
        self.test_fn = test_fn
        self.run_id = run_id or f"{method}-seed{cfg.seed}"
        self.method = method
        self.trace = []
        self.clock = Stopwatch()
        self.evals = 0
        self.steps = 0
        self.budget = None if cfg.budget_epochs is None else cfg.budget_epochs * p.N
        self.threshold = None
        if cfg.psi_star is not None and cfg.stop_rel is not None:
            self.threshold = (1.0 + cfg.stop_rel) * cfg.psi_star
        self.max_steps = cfg.max_steps

    def emit(self, s, k, x):
        self.clock.pause()
        psi, res, tloss = trace_metrics(self.p, x, 1.0, self.test_fn)
        rec = TraceRecord(
            run_id=self.run_id,
            method=self.method,
            s=s,
            k=k,
            grad_evals=self.evals,
            wall_time_s=self.clock.elapsed,
            objective=psi,
            fnat_norm=res,
            inner_newton_iters=0,
            inner_residual=np.nan,
            test_loss=tloss,
        )
        self.trace.append(rec)
        if self.sink is not None:
            self.sink.emit(rec)
        status = None
        if not np.isfinite(psi) or np.linalg.norm(x) > _DIVERGENCE_NORM:
            status = "diverged"
        elif self.threshold is not None and psi <= self.threshold:
            status = "reached_threshold"
        elif self.budget is not None and self.evals >= self.budget:
            status = "budget"
        self.clock.start()
        return status

    def exhausted(self):
        if self.budget is not None and self.evals >= self.budget:
            return "budget"
        if self.max_steps is not None and self.steps >= self.max_steps:
            return "budget"
        return None

    def result(self, x, status):
        self.clock.pause()
        return RunResult(
            x=x,
            trace=self.trace,
            status=status or "completed",
            grad_evals=self.evals,
            wall_time_s=self.clock.elapsed,
        )


def _start_point(p, cfg):
    if cfg.x0 is None:
        return np.zeros(p.n)
    return np.array(cfg.x0, dtype=float, copy=True)


def svrg_run(p, cfg, sink=None, test_fn=None, run_id=None, n_outer=10**9):
    """Snapshot/inner-loop stochastic proximal gradient with the
    variance-reduction correction grad f_S(x) - grad f_S(x_tilde) + grad f(x_tilde)."""
    rec = _Recorder(p, cfg, "svrg", sink, test_fn, run_id)
    state = SamplerState(cfg.seed, cfg.sampling)
    x = _start_point(p, cfg)
    m = cfg.m if cfg.m is not None else max(1, int(np.ceil(p.N / cfg.batch)))
    rec.clock.start()
    status = None
    for s in range(n_outer):
        status = rec.exhausted()
        if status is not None:
            break
        snap = anchor_update(p, x)
        rec.evals += p.N
        for _ in range(m):
            S = np.sort(sample_batch(state, p.N, cfg.batch))
            z = p.A[S] @ x
            g_here = np.asarray(p.A[S].T @ p.loss.grad(z, S)).ravel() / S.size
            g_snap = _snapshot_batch_gradient(p, snap, S)
            g = g_here - g_snap + snap.grad
            x = p.regularizer.prox(x - cfg.alpha * g, cfg.alpha)
            rec.evals += S.size
            rec.steps += 1
            if rec.exhausted() or np.linalg.norm(x) > _DIVERGENCE_NORM:
                break
        status = rec.emit(s, 0, x) or rec.exhausted()
        if status is not None:
            break
    return rec.result(x, status)


def saga_run(p, cfg, sink=None, test_fn=None, run_id=None):
    """Per-sample derivative table with running average.

    Rows have a single output each, so the table stores one scalar per
    sample and rebuilds A_i^T * scalar on demand; the mean gradient is
    kept incrementally and only re-derived in tests.
    """
    rec = _Recorder(p, cfg, "saga", sink, test_fn, run_id)
    state = SamplerState(cfg.seed, cfg.sampling)
    x = _start_point(p, cfg)
    # table init pass at x0
    snap = anchor_update(p, x)
    table = snap.deriv.copy()
    avg = snap.grad.copy()
    rec.evals += p.N
    rec.clock.start()
    status = None
    steps_per_epoch = max(1, int(np.ceil(p.N / cfg.batch)))
    epoch = 0
    while status is None:
        for _ in range(steps_per_epoch):
            S = np.sort(sample_batch(state, p.N, cfg.batch))
            z = p.A[S] @ x
            fresh = p.loss.grad(z, S)
            diff = np.asarray(p.A[S].T @ (fresh - table[S])).ravel() / S.size
            g = diff + avg
            x = p.regularizer.prox(x - cfg.alpha * g, cfg.alpha)
            uniq, pos = np.unique(S, return_index=True)
            # duplicate draws produce identical fresh values; update once each
            avg = avg + np.asarray(p.A[uniq].T @ (fresh[pos] - table[uniq])).ravel() / p.N
            table[uniq] = fresh[pos]
            rec.evals += S.size
            rec.steps += 1
            if rec.exhausted() or np.linalg.norm(x) > _DIVERGENCE_NORM:
                break
        epoch += 1
        status = rec.emit(epoch, 0, x) or rec.exhausted()
    return rec.result(x, status)


def adagrad_run(p, cfg, sink=None, test_fn=None, run_id=None):
    """Minibatch proximal AdaGrad with diagonal accumulator G += g*g and
    per-coordinate steps alpha/(sqrt(G)+delta)."""
    rec = _Recorder(p, cfg, "adagrad", sink, test_fn, run_id)
    state = SamplerState(cfg.seed, cfg.sampling)
    x = _start_point(p, cfg)
    G = np.zeros(p.n)
    rec.clock.start()
    status = None
    steps_per_epoch = max(1, int(np.ceil(p.N / cfg.batch)))
    epoch = 0
    while status is None:
        for _ in range(steps_per_epoch):
            S = np.sort(sample_batch(state, p.N, cfg.batch))
            z = p.A[S] @ x
            g = np.asarray(p.A[S].T @ p.loss.grad(z, S)).ravel() / S.size
            G += g * g
            steps = cfg.alpha / (np.sqrt(G) + cfg.delta_ada)
            x = p.regularizer.prox_diag(x - steps * g, steps)
            rec.evals += S.size
            rec.steps += 1
            if rec.exhausted() or np.linalg.norm(x) > _DIVERGENCE_NORM:
                break
        epoch += 1
        status = rec.emit(epoch, 0, x) or rec.exhausted()
    return rec.result(x, status)


def prox_gd_run(p, cfg, sink=None, test_fn=None, run_id=None, max_iter=None):
    """Deterministic proximal gradient; also the long-run optimum estimator."""
    rec = _Recorder(p, cfg, "prox_gd", sink, test_fn, run_id)
    x = _start_point(p, cfg)
    rec.clock.start()
    status = None
    it = 0
    while status is None:
        g = anchor_update(p, x).grad
        x = p.regularizer.prox(x - cfg.alpha * g, cfg.alpha)
        rec.evals += p.N
        rec.steps += 1
        it += 1
        status = rec.emit(it, 0, x) or rec.exhausted()
        if status is None and max_iter is not None and it >= max_iter:
            status = "budget"
    return rec.result(x, status)
