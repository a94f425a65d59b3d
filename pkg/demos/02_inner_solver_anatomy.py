"""One implicit step, opened up.

Each outer iteration solves a small dual system with a semismooth Newton
loop. This script freezes a single subproblem, runs the loop at a tight
tolerance, and prints the residual path so the fast tail is visible. It
then checks that a loose solve stays within the guaranteed distance of
the tight one.
"""

import numpy as np

from snspp import (
    SubproblemContext,
    build_problem,
    default_params,
    solve_subproblem,
    verify_inexactness,
)


def main():
    rng = np.random.default_rng(3)
    N, n, b = 60, 15, 12
    A = rng.standard_normal((N, n))
    labels = np.sign(A @ rng.standard_normal(n) + 0.2 * rng.standard_normal(N))

    p = build_problem(A, labels, "logistic", reg_kind="l1", lam=0.02)
    batch = rng.choice(N, size=b, replace=False)
    x = 0.1 * rng.standard_normal(n)
    ctx = SubproblemContext(p, x, np.zeros(n), alpha=0.5, batch=batch)

    res = solve_subproblem(ctx, default_params(eps_sub=1e-11))
    print("residual path of the Newton loop:")
    prev = None
    for i, r in enumerate(res.stats.residuals):
        ratio = "" if prev is None else f"   ratio {r / prev:.3e}"
        print(f"  iter {i:2d}   ||V(xi)|| = {r:.3e}{ratio}")
        prev = r
    print(f"converged: {res.stats.converged} "
          f"in {res.stats.iterations} iterations")

    # shrinking ratios: each step multiplies the error by ever less
    move = float(np.linalg.norm(res.x_plus - x))
    print(f"implicit step moved the point by {move:.3f}")

    report = verify_inexactness(p, ctx, eps_sub=1e-4)
    print(f"loose solve at 1e-4: dual error {report.xi_err:.2e} "
          f"(bound {report.xi_bound:.2e}), primal error {report.x_err:.2e} "
          f"(bound {report.x_bound:.2e}), within bounds: {report.passed}")


if __name__ == "__main__":
    main()
