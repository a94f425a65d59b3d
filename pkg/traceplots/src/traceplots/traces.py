"""Readers for the benchmark's emitted file formats.

Everything here works from the documented CSV/JSON schemas alone; the
library that produced the files is never imported.
"""

import csv
import json

import numpy as np

TRACE_COLUMNS = [
    "run_id",
    "method",
    "s",
    "k",
    "grad_evals",
    "wall_time_s",
    "objective",
    "fnat_norm",
    "inner_newton_iters",
    "inner_residual",
    "test_loss",
]

SWEEP_COLUMNS = [
    "method",
    "alpha",
    "batch",
    "n_seeds",
    "n_censored",
    "mean_time_s",
    "std_time_s",
]

_FLOAT_COLS = ("wall_time_s", "objective", "fnat_norm", "inner_residual", "test_loss")
_INT_COLS = ("s", "k", "grad_evals", "inner_newton_iters")


class TraceRun:
    """One run's records as column arrays."""

    def __init__(self, path, run_id, method, columns):
        self.path = str(path)
        self.run_id = run_id
        self.method = method
        self.columns = columns

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return self.columns["wall_time_s"].size

    def __repr__(self):
        return f"TraceRun({self.run_id!r}, {len(self)} records)"


def read_trace_file(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace columns {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: trace has no records")
    run_ids = {r["run_id"] for r in rows}
    methods = {r["method"] for r in rows}
    if len(run_ids) != 1 or len(methods) != 1:
        raise ValueError(f"{path}: expected a single run per trace file")
    cols = {}
    for name in _INT_COLS:
        cols[name] = np.array([int(r[name]) for r in rows])
    for name in _FLOAT_COLS:
        cols[name] = np.array([float(r[name]) for r in rows])
    return TraceRun(path, rows[0]["run_id"], rows[0]["method"], cols)


def read_sweep_file(path):
    """Sweep rows as dicts with numeric fields parsed."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SWEEP_COLUMNS:
            raise ValueError(f"{path}: unexpected sweep columns {reader.fieldnames}")
        rows = []
        for r in reader:
            rows.append(
                {
                    "method": r["method"],
                    "alpha": float(r["alpha"]),
                    "batch": int(r["batch"]),
                    "n_seeds": int(r["n_seeds"]),
                    "n_censored": int(r["n_censored"]),
                    "mean_time_s": float(r["mean_time_s"]),
                    "std_time_s": float(r["std_time_s"]),
                }
            )
    if not rows:
        raise ValueError(f"{path}: sweep has no rows")
    return rows


def load_psi_star(value):
    """A number passes through; a string is a path to an optimum JSON."""
    if value is None or isinstance(value, (int, float)):
        return value
    with open(value) as fh:
        payload = json.load(fh)
    return float(payload["psi_star"])
