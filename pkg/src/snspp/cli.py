"""Experiment runner: single runs, multi-seed batches, step/batch sweeps,
reference-optimum estimation, and quick self-checks.

Configuration comes from a JSON file (--config) with flag overrides;
precedence is flags > file > defaults. Every run writes a CSV trace and a
JSON summary into the output directory (--out, else $SNSPP_OUT, else
./results). Summaries exclude wall time so reruns are byte-identical.
"""

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .baselines import (
    BaselineConfig,
    adagrad_run,
    prox_gd_run,
    saga_run,
    svrg_run,
)
from .data import load_delimited, load_sparse_text, split, synth_student_t
from .diagnostics import (
    TraceSink,
    dataset_hash,
    estimate_optimum,
    read_summary,
    verify_inexactness,
    write_summary,
)
from .driver import SamplerState, SnsppConfig, sample_batch, snspp_run
from .model import build_problem, derive_constants
from .subsolver import SubproblemContext, eval_U, eval_V

SCHEMA_VERSION = 1
METHODS = ("snspp", "svrg", "saga", "adagrad", "prox_gd")

SWEEP_COLUMNS = [
    "method",
    "alpha",
    "batch",
    "n_seeds",
    "n_censored",
    "mean_time_s",
    "std_time_s",
]


# ---------------------------------------------------------------- config


def _load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _apply_flags(cfg, args):
    """Flags override file values; returns a new dict."""
    out = dict(cfg)
    if getattr(args, "method", None):
        names = []
        for chunk in args.method:
            names.extend(x.strip() for x in chunk.split(",") if x.strip())
        out["methods"] = [{"name": n} for n in names]
    if getattr(args, "alpha", None) is not None:
        for spec in out.get("methods", []):
            spec["alpha"] = args.alpha
    if getattr(args, "batch", None) is not None:
        for spec in out.get("methods", []):
            spec["batch"] = args.batch
    if getattr(args, "seeds", None):
        out["seeds"] = [int(s) for s in args.seeds.split(",") if s.strip()]
    if getattr(args, "budget_epochs", None) is not None:
        out["budget_epochs"] = args.budget_epochs
    if getattr(args, "stop_rel", None) is not None:
        out["stop_rel"] = args.stop_rel
    if getattr(args, "psi_star", None) is not None:
        try:
            out["psi_star"] = float(args.psi_star)
        except ValueError:
            out["psi_star"] = args.psi_star  # path to an optimum summary
    if getattr(args, "out", None):
        out["out"] = args.out
    return out


def _validate_config(cfg, need_methods=True):
    """Collect every problem at once; an empty list means valid."""
    errs = []
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errs.append(
            f"schema_version {cfg.get('schema_version')!r} unsupported "
            f"(expected {SCHEMA_VERSION})"
        )
    ds = cfg.get("dataset")
    if not isinstance(ds, dict) or "kind" not in ds:
        errs.append("dataset: missing or lacks 'kind'")
    else:
        kind = ds["kind"]
        if kind in ("sparse", "delimited"):
            path = ds.get("path")
            if not path:
                errs.append(f"dataset: {kind} requires 'path'")
            elif not os.path.exists(path):
                errs.append(f"dataset: file not found: {path}")
        elif kind != "synth_student_t":
            errs.append(f"dataset: unknown kind {kind!r}")
    loss = cfg.get("loss", {})
    if loss.get("kind", "logistic") not in ("logistic", "squared", "student_t"):
        errs.append(f"loss: unknown kind {loss.get('kind')!r}")
    reg = cfg.get("regularizer", {})
    if reg.get("kind", "l1") not in ("l1", "l1_plus_ridge", "zero"):
        errs.append(f"regularizer: unknown kind {reg.get('kind')!r}")
    if need_methods:
        methods = cfg.get("methods", [])
        if not methods:
            errs.append("methods: at least one required")
        for spec in methods:
            name = spec.get("name")
            if name not in METHODS:
                errs.append(f"methods: unknown method {name!r}")
        if not cfg.get("seeds"):
            errs.append("seeds: nonempty list required")
        has_threshold = cfg.get("psi_star") is not None and cfg.get("stop_rel") is not None
        if cfg.get("budget_epochs") is None and not has_threshold:
            errs.append("stop rule: set budget_epochs and/or psi_star + stop_rel")
    sp_cfg = cfg.get("split")
    if sp_cfg is not None and not 0.0 < sp_cfg.get("fraction", 0.8) < 1.0:
        errs.append("split: fraction must lie strictly between 0 and 1")
    return errs


def _build_dataset(dscfg):
    kind = dscfg["kind"]
    if kind == "sparse":
        return load_sparse_text(dscfg["path"])
    if kind == "delimited":
        return load_delimited(dscfg["path"], dscfg.get("target_column", 0))
    ds, _ = synth_student_t(
        n=dscfg.get("n", 5000),
        N=dscfg.get("N", 4000),
        nnz=dscfg.get("nnz", 20),
        noise_scale=dscfg.get("noise_scale", 0.1),
        nu=dscfg.get("nu", 1.0),
        sv_range=tuple(dscfg.get("sv_range", (1.0, 15.0))),
        seed=dscfg.get("seed", 0),
    )
    return ds


def _problem_from_dataset(ds, cfg):
    loss = cfg.get("loss", {})
    reg = cfg.get("regularizer", {})
    return build_problem(
        ds.features,
        ds.targets,
        loss.get("kind", "logistic"),
        reg_kind=reg.get("kind", "l1"),
        lam=reg.get("lam", 0.0),
        ridge=reg.get("ridge", 0.0),
        nu=loss.get("nu", 1.0),
        gamma=loss.get("gamma"),
    )


def _build_problem(cfg):
    """(problem, test_fn, dataset). A 'split' block holds out a validation
    set whose mean loss becomes the trace's test_loss column."""
    ds = _build_dataset(cfg["dataset"])
    test_fn = None
    sp_cfg = cfg.get("split")
    if sp_cfg is not None:
        train, val = split(ds, sp_cfg.get("fraction", 0.8), sp_cfg.get("seed", 0))
        p = _problem_from_dataset(train, cfg)
        val_p = _problem_from_dataset(val, cfg)

        def test_fn(x):
            return float(np.mean(val_p.loss.value(val_p.A @ x)))

        return p, test_fn, train
    p = _problem_from_dataset(ds, cfg)
    return p, test_fn, ds


def _resolve_psi_star(cfg):
    """psi_star may be a number or a path to an estimate-optimum summary."""
    val = cfg.get("psi_star")
    if val is None or isinstance(val, (int, float)):
        return val
    summary = read_summary(val)
    return float(summary["psi_star"])


def _default_alpha(name, p, spec):
    b = int(spec.get("batch", 1))
    if name == "snspp":
        return derive_constants(p, b, m=int(spec.get("m", 10))).alpha_hat
    if name == "prox_gd":
        return 1.0 / p.L if p.L > 0 else 1.0
    if name == "adagrad":
        return 0.1
    # conservative single-sample smoothness step for svrg / saga
    return 1.0 / p.L_bar if p.L_bar > 0 else 1.0


# ------------------------------------------------------------------ runs


def _execute(p, spec, seed, cfg, psi_star, test_fn, sink, run_id):
    name = spec["name"]
    common = dict(
        budget_epochs=cfg.get("budget_epochs"),
        psi_star=psi_star,
        stop_rel=cfg.get("stop_rel"),
    )
    alpha = float(spec.get("alpha") or _default_alpha(name, p, spec))
    batch = int(spec.get("batch", 1))
    if name == "snspp":
        run_cfg = SnsppConfig(
            alpha=alpha,
            batch_size=batch,
            m=int(spec.get("m", 10)),
            n_outer=int(spec.get("n_outer", 10**9)),
            option=spec.get("option", "I"),
            sampling=spec.get("sampling", "with"),
            seed=seed,
            eps_sub=float(spec.get("eps_sub", 1e-3)),
            tol_mode=spec.get("tol_mode", "constant"),
            delta0=float(spec.get("delta0", 0.1)),
            tol_decay=float(spec.get("tol_decay", 0.5)),
            warmup=spec.get("warmup", "none"),
            **common,
        )
        return snspp_run(p, run_cfg, sink, test_fn, run_id), alpha, batch
    run_cfg = BaselineConfig(
        method=name,
        alpha=alpha,
        batch=batch,
        m=spec.get("m"),
        delta_ada=float(spec.get("delta_ada", 1e-8)),
        seed=seed,
        sampling=spec.get("sampling", "with"),
        max_steps=spec.get("max_steps"),
        **common,
    )
    runner = {
        "svrg": svrg_run,
        "saga": saga_run,
        "adagrad": adagrad_run,
        "prox_gd": prox_gd_run,
    }[name]
    return runner(p, run_cfg, sink, test_fn, run_id), alpha, batch


def _run_single(p, spec, seed, cfg, psi_star, test_fn, out_dir, ds_hash):
    name = spec["name"]
    run_id = f"{name}-seed{seed}"
    trace_path = os.path.join(out_dir, f"{run_id}-trace.csv")
    summary_path = os.path.join(out_dir, f"{run_id}-summary.json")
    summary = {
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "method": name,
        "seed": seed,
        "dataset_hash": ds_hash,
        "config": {
            "dataset": cfg.get("dataset"),
            "loss": cfg.get("loss", {}),
            "regularizer": cfg.get("regularizer", {}),
            "split": cfg.get("split"),
            "budget_epochs": cfg.get("budget_epochs"),
            "stop_rel": cfg.get("stop_rel"),
            "psi_star": psi_star,
            "method_spec": spec,
        },
    }
    try:
        with TraceSink(trace_path) as sink:
            result, alpha, batch = _execute(
                p, spec, seed, cfg, psi_star, test_fn, sink, run_id
            )
        last = result.trace[-1] if result.trace else None
        summary.update(
            status=result.status,
            grad_evals=result.grad_evals,
            objective=last.objective if last else None,
            fnat_norm=last.fnat_norm if last else None,
            n_records=len(result.trace),
            alpha=alpha,
            batch=batch,
        )
    except Exception as exc:  # siblings keep running
        summary.update(status="error", error=f"{type(exc).__name__}: {exc}")
    write_summary(summary_path, summary)
    return summary


def cmd_run(args):
    cfg = _apply_flags(_load_config(args.config), args)
    errs = _validate_config(cfg)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = _out_dir(cfg, args)
    p, test_fn, ds = _build_problem(cfg)
    psi_star = _resolve_psi_star(cfg)
    ds_hash = dataset_hash(ds.features, ds.targets)
    jobs = [
        (spec, seed) for spec in cfg["methods"] for seed in cfg["seeds"]
    ]
    summaries = []
    with ThreadPoolExecutor(max_workers=_workers(args)) as pool:
        futures = [
            pool.submit(
                _run_single, p, spec, seed, cfg, psi_star, test_fn, out_dir, ds_hash
            )
            for spec, seed in jobs
        ]
        for fut in futures:
            summaries.append(fut.result())
    failed = [s for s in summaries if s.get("status") == "error"]
    for s in summaries:
        line = f"{s['run_id']}: {s.get('status')}"
        if "objective" in s and s.get("objective") is not None:
            line += f"  objective={s['objective']:.6g}  fnat={s['fnat_norm']:.3g}"
        if "error" in s:
            line += f"  {s['error']}"
        print(line)
    print(f"{len(summaries) - len(failed)}/{len(summaries)} runs succeeded -> {out_dir}")
    return 1 if failed else 0


def cmd_sweep(args):
    cfg = _apply_flags(_load_config(args.config), args)
    errs = _validate_config(cfg)
    if cfg.get("psi_star") is None or cfg.get("stop_rel") is None:
        errs.append("sweep: psi_star and stop_rel are required (time-to-threshold)")
    if cfg.get("budget_epochs") is None:
        errs.append("sweep: budget_epochs required (censoring bound)")
    alphas = args.alpha_grid or cfg.get("alpha_grid") or []
    batches = args.batch_grid or cfg.get("batch_grid") or []
    if not alphas:
        errs.append("sweep: alpha grid empty")
    if not batches:
        errs.append("sweep: batch grid empty")
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = _out_dir(cfg, args)
    p, test_fn, ds = _build_problem(cfg)
    psi_star = _resolve_psi_star(cfg)
    seeds = cfg["seeds"]

    def cell(spec, alpha, batch):
        times = []
        censored = 0
        for seed in seeds:
            s = dict(spec, alpha=float(alpha), batch=int(batch))
            try:
                result, _, _ = _execute(p, s, seed, cfg, psi_star, test_fn, None, None)
            except Exception:
                censored += 1
                continue
            if result.status == "reached_threshold":
                times.append(result.wall_time_s)
            else:
                censored += 1
        mean = float(np.mean(times)) if times else float("nan")
        std = float(np.std(times, ddof=1)) if len(times) > 1 else 0.0
        return {
            "method": spec["name"],
            "alpha": float(alpha),
            "batch": int(batch),
            "n_seeds": len(seeds),
            "n_censored": censored,
            "mean_time_s": mean,
            "std_time_s": std,
        }

    cells = [
        (spec, a, b)
        for spec in cfg["methods"]
        for a in alphas
        for b in batches
    ]
    with ThreadPoolExecutor(max_workers=_workers(args)) as pool:
        rows = list(pool.map(lambda c: cell(*c), cells))
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(
                {
                    k: (f"{v:.17g}" if isinstance(v, float) else v)
                    for k, v in row.items()
                }
            )
    n_cens = sum(r["n_censored"] for r in rows)
    print(f"{len(rows)} cells ({n_cens} censored runs) -> {path}")
    return 0


def cmd_estimate_optimum(args):
    cfg = _apply_flags(_load_config(args.config), args)
    errs = _validate_config(cfg, need_methods=False)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = _out_dir(cfg, args)
    p, _, ds = _build_problem(cfg)
    est = estimate_optimum(
        p,
        alpha=args.alpha,
        tol=args.tol,
        max_iter=args.max_iter,
    )
    payload = {
        "schema_version": SCHEMA_VERSION,
        "psi_star": est.psi_star,
        "fnat_norm": est.fnat_norm,
        "iterations": est.iterations,
        "converged": est.converged,
        "alpha": est.alpha,
        "dataset_hash": dataset_hash(ds.features, ds.targets),
        "config": {
            "dataset": cfg.get("dataset"),
            "loss": cfg.get("loss", {}),
            "regularizer": cfg.get("regularizer", {}),
            "split": cfg.get("split"),
        },
    }
    path = os.path.join(out_dir, "optimum.json")
    write_summary(path, payload)
    flag = "converged" if est.converged else "iteration cap hit"
    print(
        f"psi_star={est.psi_star:.12g}  fnat={est.fnat_norm:.3g} "
        f"({est.iterations} iterations, {flag}) -> {path}"
    )
    return 0 if est.converged else 1


def _fd_identity_check(p, seed, n_probes=6):
    """Central finite differences of the dual merit against its gradient."""
    rng = np.random.Generator(np.random.Philox(seed))
    state = SamplerState(seed)
    b = min(8, p.N)
    S = np.sort(sample_batch(state, p.N, b))
    x = rng.standard_normal(p.n) / np.sqrt(p.n)
    alpha = 1.0 / max(p.L, 1.0)
    ctx = SubproblemContext(p, x, np.zeros(p.n), alpha, S)
    xi = ctx.cold_start() + 0.01 * rng.standard_normal(b)
    if not p.loss.in_domain(xi):
        xi = ctx.cold_start()
    v = eval_V(ctx, xi)
    h = 1e-6
    worst = 0.0
    for _ in range(n_probes):
        d = rng.standard_normal(b)
        d /= np.linalg.norm(d)
        fd = (eval_U(ctx, xi + h * d) - eval_U(ctx, xi - h * d)) / (2 * h)
        worst = max(worst, abs(fd - float(v @ d)) / max(1.0, abs(fd)))
    return worst


def cmd_verify(args):
    cfg = _apply_flags(_load_config(args.config), args)
    errs = _validate_config(cfg, need_methods=False)
    if errs:
        for e in errs:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    p, _, _ = _build_problem(cfg)
    seeds = [int(s) for s in (args.seeds or "0,1,2,3,4").split(",") if s.strip()]
    ok = True

    worst = max(_fd_identity_check(p, s) for s in seeds[:3])
    passed = worst <= 1e-5
    ok &= passed
    print(f"[{'PASS' if passed else 'FAIL'}] dual gradient identity: "
          f"max rel FD error {worst:.3e} (tol 1e-5)")

    eps = 1e-3
    all_hold = True
    worst_ratio = 0.0
    for seed in seeds:
        rng = np.random.Generator(np.random.Philox(seed + 1000))
        state = SamplerState(seed + 1000)
        b = min(16, p.N)
        S = np.sort(sample_batch(state, p.N, b))
        x = rng.standard_normal(p.n) / np.sqrt(p.n)
        ctx = SubproblemContext(p, x, np.zeros(p.n), 1.0 / max(p.L, 1.0), S)
        rep = verify_inexactness(p, ctx, eps)
        all_hold &= rep.passed
        if rep.xi_bound > 0:
            worst_ratio = max(worst_ratio, rep.xi_err / rep.xi_bound)
    ok &= all_hold
    print(f"[{'PASS' if all_hold else 'FAIL'}] inexactness bounds at eps={eps:g} "
          f"over {len(seeds)} instances (worst dual ratio {worst_ratio:.3f})")

    lip = 2.0 + p.L
    worst_lip = 0.0
    from .diagnostics import fnat as _fnat

    for seed in seeds:
        rng = np.random.Generator(np.random.Philox(seed + 2000))
        xa = rng.standard_normal(p.n)
        xb = xa + rng.standard_normal(p.n) * 0.1
        num = np.linalg.norm(_fnat(p, xa) - _fnat(p, xb))
        den = lip * np.linalg.norm(xa - xb)
        worst_lip = max(worst_lip, num / den)
    passed = worst_lip <= 1.0 + 1e-8
    ok &= passed
    print(f"[{'PASS' if passed else 'FAIL'}] natural-residual Lipschitz bound "
          f"2+L: worst ratio {worst_lip:.3f}")

    return 0 if ok else 1


# ------------------------------------------------------------- plumbing


def _out_dir(cfg, args):
    out = getattr(args, "out", None) or cfg.get("out") or os.environ.get(
        "SNSPP_OUT", "results"
    )
    os.makedirs(out, exist_ok=True)
    return out


def _workers(args):
    return getattr(args, "workers", None) or os.cpu_count() or 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snspp",
        description="Stochastic proximal point experiments and baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", help="output directory (default $SNSPP_OUT or ./results)")
        sp.add_argument("--workers", type=int, help="worker pool size")
        sp.add_argument("--seeds", help="comma-separated seed list")

    run_p = sub.add_parser("run", help="execute configured (method, seed) runs")
    common(run_p)
    run_p.add_argument("--method", action="append",
                       help="method name(s); repeat or comma-separate")
    run_p.add_argument("--alpha", type=float, help="override step size")
    run_p.add_argument("--batch", type=int, help="override batch size")
    run_p.add_argument("--budget-epochs", type=float, dest="budget_epochs")
    run_p.add_argument("--stop-rel", type=float, dest="stop_rel")
    run_p.add_argument("--psi-star", dest="psi_star",
                       help="reference objective: a number or an optimum JSON path")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="step/batch grid of time-to-threshold")
    common(sweep_p)
    sweep_p.add_argument("--method", action="append")
    sweep_p.add_argument("--alpha-grid", type=float, nargs="+", dest="alpha_grid")
    sweep_p.add_argument("--batch-grid", type=int, nargs="+", dest="batch_grid")
    sweep_p.add_argument("--budget-epochs", type=float, dest="budget_epochs")
    sweep_p.add_argument("--stop-rel", type=float, dest="stop_rel")
    sweep_p.add_argument("--psi-star", dest="psi_star",
                         help="reference objective: a number or an optimum JSON path")
    sweep_p.add_argument("--alpha", type=float, help=argparse.SUPPRESS)
    sweep_p.add_argument("--batch", type=int, help=argparse.SUPPRESS)
    sweep_p.set_defaults(func=cmd_sweep)

    est_p = sub.add_parser("estimate-optimum", help="long proximal-gradient run")
    common(est_p)
    est_p.add_argument("--alpha", type=float, help="override 1/L step")
    est_p.add_argument("--tol", type=float, default=1e-10)
    est_p.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    est_p.set_defaults(func=cmd_estimate_optimum)

    ver_p = sub.add_parser("verify", help="dual-system and bound self-checks")
    common(ver_p)
    ver_p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
