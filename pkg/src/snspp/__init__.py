"""Variance-reduced stochastic proximal point optimization with a
semismooth Newton subproblem solver, proximal-gradient baselines, and an
experiment harness for sparse regression benchmarks."""

from .baselines import BaselineConfig, adagrad_run, prox_gd_run, saga_run, svrg_run
from .data import (
    Dataset,
    load_delimited,
    load_sparse_text,
    split,
    synth_student_t,
    write_sparse_text,
)
from .diagnostics import (
    InexactnessReport,
    OptimumEstimate,
    Stopwatch,
    TraceRecord,
    TraceSink,
    dataset_hash,
    estimate_optimum,
    fnat,
    read_summary,
    read_trace,
    trace_metrics,
    verify_inexactness,
    write_summary,
)
from .driver import (
    RunResult,
    SamplerState,
    SnsppConfig,
    anchor_update,
    sample_batch,
    shift_vector,
    snspp_run,
    tolerance_schedule,
)
from .losses import Logistic, Squared, StudentT, make_loss, student_t_dual_root
from .model import (
    ConstantsReport,
    EvaluationError,
    Problem,
    batch_gradient,
    build_problem,
    derive_constants,
    full_gradient,
    objective,
    operator_norm,
    weak_convexity_matvec,
)
from .regularizers import L1, L1Ridge, Regularizer, Zero, make_regularizer
from .subsolver import (
    NewtonParams,
    SubproblemContext,
    SubproblemError,
    SubproblemResult,
    default_params,
    solve_subproblem,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig",
    "ConstantsReport",
    "Dataset",
    "EvaluationError",
    "InexactnessReport",
    "L1",
    "L1Ridge",
    "Logistic",
    "NewtonParams",
    "OptimumEstimate",
    "Problem",
    "Regularizer",
    "RunResult",
    "SamplerState",
    "SnsppConfig",
    "Squared",
    "Stopwatch",
    "StudentT",
    "SubproblemContext",
    "SubproblemError",
    "SubproblemResult",
    "TraceRecord",
    "TraceSink",
    "Zero",
    "adagrad_run",
    "anchor_update",
    "batch_gradient",
    "build_problem",
    "dataset_hash",
    "default_params",
    "derive_constants",
    "estimate_optimum",
    "fnat",
    "full_gradient",
    "load_delimited",
    "load_sparse_text",
    "make_loss",
    "make_regularizer",
    "objective",
    "operator_norm",
    "prox_gd_run",
    "read_summary",
    "read_trace",
    "saga_run",
    "sample_batch",
    "shift_vector",
    "snspp_run",
    "solve_subproblem",
    "split",
    "student_t_dual_root",
    "svrg_run",
    "synth_student_t",
    "tolerance_schedule",
    "trace_metrics",
    "verify_inexactness",
    "weak_convexity_matvec",
    "write_sparse_text",
    "write_summary",
]
