"""Stationarity metrics, trace recording, and empirical verification hooks.

The natural residual F_nat^alpha(x) = x - prox_{alpha phi}(x - alpha grad f(x))
vanishes exactly at stationary points; alpha = 1 is the default measure.

Traces are append-only CSV files whose columns follow TraceRecord field
order; each run also gets a JSON summary. Wall time in the records is
algorithm time only: the clock is paused while metrics and I/O happen.
"""

import csv
import hashlib
import json
import threading
import time
from dataclasses import dataclass, fields

import numpy as np
import scipy.sparse as sp

from . import subsolver
from .model import full_gradient, objective

__all__ = [
    "TraceRecord",
    "TRACE_COLUMNS",
    "TraceSink",
    "read_trace",
    "fnat",
    "trace_metrics",
    "Stopwatch",
    "verify_inexactness",
    "InexactnessReport",
    "estimate_optimum",
    "OptimumEstimate",
    "dataset_hash",
    "write_summary",
    "read_summary",
]


@dataclass
class TraceRecord:
    run_id: str
    method: str
    s: int
    k: int
    grad_evals: int
    wall_time_s: float
    objective: float
    fnat_norm: float
    inner_newton_iters: int
    inner_residual: float
    test_loss: float


TRACE_COLUMNS = [f.name for f in fields(TraceRecord)]


class TraceSink:
    """Line-buffered CSV sink, safe for concurrent appends from several runs."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "w", buffering=1, newline="")
        self._fh.write(",".join(TRACE_COLUMNS) + "\n")

    def emit(self, record):
        line = ",".join(
            [
                record.run_id,
                record.method,
                str(record.s),
                str(record.k),
                str(record.grad_evals),
                repr(record.wall_time_s),
                repr(record.objective),
                repr(record.fnat_norm),
                str(record.inner_newton_iters),
                repr(record.inner_residual),
                repr(record.test_loss),
            ]
        )
        with self._lock:
            self._fh.write(line + "\n")

    def flush(self):
        with self._lock:
            self._fh.flush()

    def close(self):
        with self._lock:
            if not self._fh.closed:
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_trace(path):
    """Parse a trace CSV back into TraceRecord objects."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns in {path}: {reader.fieldnames}")
        for row in reader:
            out.append(
                TraceRecord(
                    run_id=row["run_id"],
                    method=row["method"],
                    s=int(row["s"]),
                    k=int(row["k"]),
                    grad_evals=int(row["grad_evals"]),
                    wall_time_s=float(row["wall_time_s"]),
                    objective=float(row["objective"]),
                    fnat_norm=float(row["fnat_norm"]),
                    inner_newton_iters=int(row["inner_newton_iters"]),
                    inner_residual=float(row["inner_residual"]),
                    test_loss=float(row["test_loss"]),
                )
            )
    return out


class Stopwatch:
    """Monotonic, pausable clock; metric evaluation and I/O run while paused."""

    def __init__(self):
        self._accum = 0.0
        self._t0 = None

    def start(self):
        if self._t0 is None:
            self._t0 = time.perf_counter()

    def pause(self):
        if self._t0 is not None:
            self._accum += time.perf_counter() - self._t0
            self._t0 = None

    def add(self, seconds):
        """Credit time measured by another clock (e.g. a warmup sub-run)."""
        self._accum += float(seconds)

    @property
    def elapsed(self):
        if self._t0 is None:
            return self._accum
        return self._accum + (time.perf_counter() - self._t0)


def fnat(p, x, alpha=1.0):
    """Natural residual x - prox_{alpha phi}(x - alpha grad f(x))."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    x = np.asarray(x, dtype=float)
    g = full_gradient(p, x)
    return x - p.regularizer.prox(x - alpha * g, alpha)


def trace_metrics(p, x, alpha=1.0, test_fn=None):
    """(objective, ||F_nat||, test loss) sharing one pass over the data."""
    x = np.asarray(x, dtype=float)
    z = p.A @ x
    vals = p.loss.value(z)
    psi = float(np.mean(vals)) + float(p.regularizer.value(x))
    g = p.loss.grad(z)
    grad = np.asarray(p.A.T @ g).ravel() / p.N
    r = x - p.regularizer.prox(x - alpha * grad, alpha)
    t = float(test_fn(x)) if test_fn is not None else np.nan
    return psi, float(np.linalg.norm(r)), t


@dataclass
class InexactnessReport:
    xi_err: float
    x_err: float
    xi_bound: float
    x_bound: float
    passed: bool


def verify_inexactness(p, ctx, eps_sub, xi0=None):
    """Compare a solve at eps_sub against a tight reference (eps = 1e-12).

    The dual error must stay within eps_sub / mu_star and the primal error
    within alpha sqrt(A_bar) eps_sub / (mu_star sqrt(b)); both follow from
    strong monotonicity of the dual system.
    """
    if p.mu_star is None:
        raise ValueError("mu_star undefined for this problem")
    params_ref = subsolver.NewtonParams(eps_sub=1e-12, max_iter=200)
    params_test = subsolver.NewtonParams(eps_sub=eps_sub, max_iter=200)
    start = ctx.cold_start() if xi0 is None else np.asarray(xi0, dtype=float)
    ref = subsolver.solve_subproblem(ctx, params_ref, start)
    test = subsolver.solve_subproblem(ctx, params_test, start)
    xi_err = float(np.linalg.norm(test.xi - ref.xi))
    x_err = float(np.linalg.norm(test.x_plus - ref.x_plus))
    xi_bound = eps_sub / p.mu_star
    x_bound = ctx.alpha * np.sqrt(p.A_bar) * eps_sub / (p.mu_star * np.sqrt(ctx.b))
    return InexactnessReport(
        xi_err=xi_err,
        x_err=x_err,
        xi_bound=float(xi_bound),
        x_bound=float(x_bound),
        passed=bool(xi_err <= xi_bound and x_err <= x_bound),
    )


@dataclass
class OptimumEstimate:
    psi_star: float
    x_star: np.ndarray
    fnat_norm: float
    iterations: int
    converged: bool
    alpha: float


def estimate_optimum(p, alpha=None, tol=1e-10, max_iter=100_000, x0=None):
    """Reference-optimum protocol: proximal gradient descent until the
    natural residual (alpha = 1) falls below tol, or the iteration cap.
    """
    if alpha is None:
        alpha = 1.0 / p.L if p.L > 0 else 1.0
    x = np.zeros(p.n) if x0 is None else np.array(x0, dtype=float, copy=True)
    reg = p.regularizer
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        g = full_gradient(p, x)
        res = float(np.linalg.norm(x - reg.prox(x - g, 1.0)))
        if res <= tol:
            break
        x = reg.prox(x - alpha * g, alpha)
    return OptimumEstimate(
        psi_star=objective(p, x),
        x_star=x,
        fnat_norm=res,
        iterations=it,
        converged=bool(res <= tol),
        alpha=float(alpha),
    )


def dataset_hash(features, targets=None):
    """Stable content hash of a dataset (dense or CSR features)."""
    h = hashlib.sha256()
    if sp.issparse(features):
        m = features.tocsr()
        h.update(np.asarray(m.shape, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(m.data).tobytes())
        h.update(np.ascontiguousarray(m.indices).tobytes())
        h.update(np.ascontiguousarray(m.indptr).tobytes())
    else:
        arr = np.ascontiguousarray(np.asarray(features, dtype=float))
        h.update(np.asarray(arr.shape, dtype=np.int64).tobytes())
        h.update(arr.tobytes())
    if targets is not None:
        h.update(np.ascontiguousarray(np.asarray(targets, dtype=float)).tobytes())
    return h.hexdigest()


def write_summary(path, summary):
    """JSON summary of one run; keys are sorted so reruns are byte-stable
    apart from the volatile fields (wall_time_s, created_at).
    """
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path) as fh:
        return json.load(fh)
