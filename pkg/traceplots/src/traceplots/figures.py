"""Figure regeneration: convergence curves and step-size robustness bands.

Curves are pure functions of the input files, so rerendering a spec
reproduces the figure. Seed averaging uses 200 logarithmic bins over the
union x-range of the runs being averaged; single runs are drawn raw with
one marker per record.
"""

import glob as _glob
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .traces import load_psi_star, read_sweep_file, read_trace_file

X_AXES = ("time", "epochs")
Y_AXES = ("objective_gap", "fnat", "test_loss")
FORMATS = ("png", "svg")

_Y_LABEL = {
    "objective_gap": "objective gap",
    "fnat": "natural residual",
    "test_loss": "test loss",
}


@dataclass
class FigureSpec:
    """What to plot and where to put it."""

    trace_glob: str
    out_path: str
    x_axis: str = "time"
    y_axis: str = "objective_gap"
    log_x: bool = False
    log_y: bool = True
    fmt: str = "png"
    psi_star: object = None  # number, or path to an optimum JSON
    n_samples: int = None  # converts grad_evals to epochs when given
    n_bins: int = 200

    def __post_init__(self):
        if self.x_axis not in X_AXES:
            raise ValueError(f"x_axis must be one of {X_AXES}")
        if self.y_axis not in Y_AXES:
            raise ValueError(f"y_axis must be one of {Y_AXES}")
        if self.fmt not in FORMATS:
            raise ValueError(f"fmt must be one of {FORMATS}")
        if self.n_bins < 1:
            raise ValueError("n_bins must be positive")


@dataclass
class SweepSpec:
    sweep_csv: str
    out_path: str
    log_x: bool = True
    log_y: bool = True
    fmt: str = "png"

    def __post_init__(self):
        if self.fmt not in FORMATS:
            raise ValueError(f"fmt must be one of {FORMATS}")


def binned_mean(x, y, n_bins):
    """Pointwise mean of y after logarithmic x-binning.

    Bin edges are n_bins log-spaced intervals spanning the positive part of
    x; non-positive x lands in the first bin. Empty bins are dropped and the
    returned abscissa is each occupied bin's geometric center.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = x[x > 0]
    if pos.size == 0:
        return np.array([np.mean(x)]), np.array([np.mean(y)])
    lo, hi = pos.min(), x.max()
    if not hi > lo * (1 + 1e-12):
        return np.array([lo]), np.array([np.mean(y)])
    edges = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
    idx = np.clip(np.digitize(x, edges) - 1, 0, n_bins - 1)
    centers = np.sqrt(edges[:-1] * edges[1:])
    xs, ys = [], []
    for b in range(n_bins):
        mask = idx == b
        if mask.any():
            xs.append(centers[b])
            ys.append(float(np.mean(y[mask])))
    return np.array(xs), np.array(ys)


def _axis_values(run, spec, psi_star):
    if spec.x_axis == "time":
        x = run["wall_time_s"]
    else:
        x = run["grad_evals"].astype(float)
        if spec.n_samples:
            x = x / float(spec.n_samples)
    if spec.y_axis == "objective_gap":
        y = run["objective"] - psi_star
    elif spec.y_axis == "fnat":
        y = run["fnat_norm"]
    else:
        y = run["test_loss"]
    keep = np.isfinite(x) & np.isfinite(y)
    return x[keep], y[keep]


def plot_convergence(spec):
    """Render seed-averaged convergence curves, one per method.

    Returns {"out_path", "psi_star", "curves": {method: {...}}} where each
    curve carries its plotted x/y arrays for downstream verification.
    """
    paths = sorted(_glob.glob(spec.trace_glob))
    if not paths:
        raise ValueError(f"no trace files match {spec.trace_glob!r}; nothing to plot")
    runs = [read_trace_file(p) for p in paths]

    psi_star = load_psi_star(spec.psi_star)
    if spec.y_axis == "objective_gap" and psi_star is None:
        raise ValueError(
            "objective_gap needs a reference optimum; run `estimate-optimum` "
            "and pass its JSON (or the value) as psi_star"
        )

    groups = {}
    for run in runs:
        groups.setdefault(run.method, []).append(run)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    curves = {}
    for method, members in groups.items():
        xs = [_axis_values(r, spec, psi_star) for r in members]
        xs = [(x, y) for x, y in xs if x.size]
        if not xs:
            raise ValueError(
                f"method {method!r} has no finite {spec.y_axis} values to plot"
            )
        if len(xs) == 1:
            x, y = xs[0]
            order = np.argsort(x, kind="stable")
            x, y = x[order], y[order]
            binned = False
        else:
            all_x = np.concatenate([p[0] for p in xs])
            all_y = np.concatenate([p[1] for p in xs])
            x, y = binned_mean(all_x, all_y, spec.n_bins)
            binned = True
        plot_y = np.maximum(y, 1e-300) if spec.log_y else y
        ax.plot(x, plot_y, marker="o", markersize=3.5, label=method)
        curves[method] = {
            "x": x,
            "y": y,
            "binned": binned,
            "n_runs": len(xs),
            "marker_count": int(x.size),
        }

    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("wall time [s]" if spec.x_axis == "time"
                  else ("epochs" if spec.n_samples else "gradient evaluations"))
    ax.set_ylabel(_Y_LABEL[spec.y_axis])
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _save(fig, spec.out_path, spec.fmt)
    return {"out_path": spec.out_path, "psi_star": psi_star, "curves": curves}


def plot_sweep(spec):
    """Runtime vs step size per (method, batch), mean with a +-2 sigma band.

    Fully censored cells (no run reached the threshold, mean is NaN) are
    drawn as cap glyphs pinned above the finite data, never as finite times.
    Returns the plotted cells and the censored list.
    """
    rows = read_sweep_file(spec.sweep_csv)
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["batch"]), []).append(r)

    finite_tops = [
        r["mean_time_s"] + 2.0 * r["std_time_s"]
        for r in rows
        if np.isfinite(r["mean_time_s"])
    ]
    cap_y = 1.5 * max(finite_tops) if finite_tops else 1.0

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    cells = []
    censored = []
    for (method, batch), members in sorted(groups.items()):
        members = sorted(members, key=lambda r: r["alpha"])
        alphas = np.array([r["alpha"] for r in members])
        means = np.array([r["mean_time_s"] for r in members])
        stds = np.array([r["std_time_s"] for r in members])
        ok = np.isfinite(means)
        label = f"{method} (b={batch})"
        if ok.any():
            line, = ax.plot(alphas[ok], means[ok], marker="o", label=label)
            ax.fill_between(
                alphas[ok],
                means[ok] - 2.0 * stds[ok],
                means[ok] + 2.0 * stds[ok],
                alpha=0.25,
                color=line.get_color(),
            )
            color = line.get_color()
        else:
            color = None
        if (~ok).any():
            ax.plot(
                alphas[~ok],
                np.full((~ok).sum(), cap_y),
                linestyle="none",
                marker="^",
                markersize=9,
                color=color,
                label=None if ok.any() else f"{label} (censored)",
            )
        for r, is_ok in zip(members, ok):
            cells.append(
                {
                    "method": method,
                    "batch": batch,
                    "alpha": r["alpha"],
                    "mean_time_s": r["mean_time_s"],
                    "band_halfwidth": 2.0 * r["std_time_s"],
                    "censored": not bool(is_ok),
                }
            )
            if not is_ok:
                censored.append((method, r["alpha"], batch))

    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("step size")
    ax.set_ylabel("time to threshold [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _save(fig, spec.out_path, spec.fmt)
    return {"out_path": spec.out_path, "cells": cells, "censored": censored,
            "cap_y": cap_y}


def _save(fig, out_path, fmt):
    # fixed hash salt plus a scrubbed date keep SVG output byte-reproducible
    with plt.rc_context({"svg.hashsalt": "traceplots"}):
        kwargs = {"format": fmt, "dpi": 150, "bbox_inches": "tight"}
        if fmt == "svg":
            kwargs["metadata"] = {"Date": None}
        fig.savefig(out_path, **kwargs)
    plt.close(fig)
