"""Standalone figure regeneration for solver trace and sweep files."""

from .figures import (
    FigureSpec,
    SweepSpec,
    binned_mean,
    plot_convergence,
    plot_sweep,
)
from .traces import (
    SWEEP_COLUMNS,
    TRACE_COLUMNS,
    TraceRun,
    load_psi_star,
    read_sweep_file,
    read_trace_file,
)

__all__ = [
    "FigureSpec",
    "SweepSpec",
    "binned_mean",
    "plot_convergence",
    "plot_sweep",
    "TraceRun",
    "TRACE_COLUMNS",
    "SWEEP_COLUMNS",
    "read_trace_file",
    "read_sweep_file",
    "load_psi_star",
]
