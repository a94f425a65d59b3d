"""Loss families with primal value/gradient and conjugate oracles.

Each family implements both sides of the duality used by the subproblem
solver: the primal f_i and the gradient/Hessian of the conjugate of the
shifted function fhat_i(z) = f_i(z) + (gamma/2) z^2. The conjugate of a
(L_i + gamma)-smooth strongly convex fhat_i has second derivative bounded
below by 1/(L_i + gamma), which is what makes the dual system strongly
monotone.

All oracles are vectorized over a batch of scalar arguments; ``idx``
selects the per-sample parameters (targets) for the entries of ``z``.
The logistic family is parameter free: labels are absorbed into the data
rows (A_i = b_i * a_i) when the problem is built.
"""

import numpy as np
from scipy.special import xlogy

__all__ = [
    "LossFamily",
    "Logistic",
    "Squared",
    "StudentT",
    "student_t_dual_root",
    "make_loss",
]


class LossFamily:
    """Interface shared by all loss families (scalar losses, m_i = 1)."""

    kind = None
    # weak-convexity constant of f_i (0 for convex families)
    gamma = 0.0

    def value(self, z, idx=None):
        raise NotImplementedError

    def grad(self, z, idx=None):
        raise NotImplementedError

    def conj_val(self, xi, idx=None):
        """Value of the conjugate of fhat_i at xi."""
        raise NotImplementedError

    def conj_grad(self, xi, idx=None):
        """Derivative of the conjugate of fhat_i; inverse of z -> fhat_i'(z)."""
        raise NotImplementedError

    def conj_hess(self, xi, idx=None):
        """Element of the generalized Hessian of the conjugate; >= 1/(L_i+gamma)."""
        raise NotImplementedError

    def in_domain(self, xi):
        """True iff every entry of xi lies strictly inside the conjugate domain."""
        raise NotImplementedError

    def dual_start(self):
        """Cold-start dual value (interior point of the conjugate domain)."""
        raise NotImplementedError

    def smoothness(self, N):
        """Per-sample smoothness constants L_i of f_i, as a length-N array."""
        raise NotImplementedError

    def _check_domain(self, xi):
        if not self.in_domain(xi):
            raise ValueError(f"dual point outside the conjugate domain of {self.kind}")


class Logistic(LossFamily):
    """f(z) = ln(1 + exp(-z)); conjugate domain (-1, 0).

    The conjugate is the (shifted) binary entropy
    f*(xi) = (-xi) ln(-xi) + (1+xi) ln(1+xi), with the convention
    0 ln 0 = 0 at the (excluded) endpoints.
    """

    kind = "logistic"

    def value(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        pos = z >= 0
        # branch on sign so neither exp can overflow
        out[pos] = np.log1p(np.exp(-z[pos]))
        out[~pos] = -z[~pos] + np.log1p(np.exp(z[~pos]))
        return out

    def grad(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        out = np.empty_like(z)
        pos = z >= 0
        e = np.exp(-z[pos])
        out[pos] = -e / (1.0 + e)
        out[~pos] = -1.0 / (1.0 + np.exp(z[~pos]))
        return out

    def conj_val(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        self._check_domain(xi)
        return xlogy(-xi, -xi) + xlogy(1.0 + xi, 1.0 + xi)

    def conj_grad(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        self._check_domain(xi)
        return np.log1p(xi) - np.log(-xi)

    def conj_hess(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        self._check_domain(xi)
        return -1.0 / (xi * xi + xi)

    def in_domain(self, xi):
        xi = np.asarray(xi, dtype=float)
        return bool(np.all((xi > -1.0) & (xi < 0.0)))

    def dual_start(self):
        return -0.5

    def smoothness(self, N):
        return np.full(N, 0.25)


class Squared(LossFamily):
    """f(z) = (z - b)^2 / 2 with per-sample target b; conjugate domain R."""

    kind = "squared"

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=float)

    def _b(self, idx):
        return self.targets if idx is None else self.targets[np.asarray(idx)]

    def value(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        return 0.5 * (z - self._b(idx)) ** 2

    def grad(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        return z - self._b(idx)

    def conj_val(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        return 0.5 * xi * xi + xi * self._b(idx)

    def conj_grad(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        return xi + self._b(idx)

    def conj_hess(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        return np.ones_like(xi)

    def in_domain(self, xi):
        return bool(np.all(np.isfinite(np.asarray(xi, dtype=float))))

    def dual_start(self):
        return 0.0

    def smoothness(self, N):
        return np.ones(N)


def _std_grad(z, b, nu):
    d = z - b
    return 2.0 * d / (nu + d * d)


def _std_hess(z, b, nu):
    d2 = (z - b) ** 2
    return 2.0 * (nu - d2) / (nu + d2) ** 2


def _cubic_coeffs(x, b, gamma, nu):
    # (x - gamma z)(nu + (z-b)^2) - 2(z-b) expanded in powers of z
    c3 = -gamma
    c2 = x + 2.0 * gamma * b
    c1 = -2.0 * b * x - 2.0 - gamma * nu - gamma * b * b
    c0 = x * nu + x * b * b + 2.0 * b
    return c3, c2, c1, c0


def _bracketed_newton(x, b, gamma, nu, z0, tol=1e-10, max_iter=200):
    """Root of g(z) = x - f'(z) - gamma*z, g strictly decreasing. Scalar."""

    def g(z):
        return x - _std_grad(z, b, nu) - gamma * z

    def gp(z):
        return -_std_hess(z, b, nu) - gamma

    z = z0 if np.isfinite(z0) else b + x / (gamma + 2.0 / nu)
    gz = g(z)
    step = 1.0 + abs(z)
    if gz > 0:
        lo, hi = z, z + step
        while g(hi) > 0:
            step *= 2.0
            hi = z + step
    else:
        hi, lo = z, z - step
        while g(lo) < 0:
            step *= 2.0
            lo = z - step
    for _ in range(max_iter):
        gz = g(z)
        if abs(gz) <= tol:
            return z
        if gz > 0:
            lo = z
        else:
            hi = z
        zn = z - gz / gp(z)
        if not (lo < zn < hi):
            zn = 0.5 * (lo + hi)
        z = zn
    return z


def student_t_dual_root(x, b, gamma, nu):
    """Solve fhat'(z) = x for the Student-t loss, i.e. the unique real root of

        -gamma z^3 + (x + 2 gamma b) z^2
        - (2bx + 2 + gamma nu + gamma b^2) z + (x nu + x b^2 + 2b) = 0.

    Halley iteration on the cubic, started from one Newton step of the
    stationarity condition at z = b, with a bisection-guarded Newton polish
    whenever the stationarity residual |x - f'(z) - gamma z| is above 1e-10.

    Accepts scalars or broadcastable arrays; returns a float for scalar input.
    Requires gamma > 1/(4 nu), which makes fhat strictly convex and the root
    unique.
    """
    if nu <= 0:
        raise ValueError("degrees of freedom must be positive")
    if gamma <= 0.25 / nu:
        raise ValueError("gamma must exceed 1/(4*nu) for a unique root")
    x_in = np.asarray(x, dtype=float)
    scalar = x_in.ndim == 0 and np.asarray(b).ndim == 0
    xv, bv = np.atleast_1d(*np.broadcast_arrays(x_in, np.asarray(b, dtype=float)))
    xv = np.array(xv, dtype=float)
    bv = np.array(bv, dtype=float)

    c3, c2, c1, c0 = _cubic_coeffs(xv, bv, gamma, nu)
    z = bv + xv / (gamma + 2.0 / nu)
    for _ in range(50):
        c = ((c3 * z + c2) * z + c1) * z + c0
        active = np.abs(c) > 1e-12
        if not active.any():
            break
        cp = (3.0 * c3 * z + 2.0 * c2) * z + c1
        cpp = 6.0 * c3 * z + 2.0 * c2
        denom = 2.0 * cp * cp - c * cpp
        with np.errstate(divide="ignore", invalid="ignore"):
            halley = 2.0 * c * cp / denom
            newton = c / cp
        step = np.where(np.abs(denom) > 1e-300, halley, newton)
        step = np.where(np.isfinite(step), step, 0.0)
        z = np.where(active, z - step, z)

    resid = np.abs(xv - _std_grad(z, bv, nu) - gamma * z)
    bad = ~np.isfinite(z) | (resid > 1e-10)
    for i in np.nonzero(bad)[0]:
        z[i] = _bracketed_newton(xv[i], bv[i], gamma, nu, z[i])
    return float(z[0]) if scalar else z.reshape(np.broadcast_shapes(x_in.shape, np.asarray(b).shape))


class StudentT(LossFamily):
    """f(z) = ln(1 + (z - b)^2 / nu), a 1/(4 nu)-weakly convex robust loss.

    The conjugate oracles act on fhat = f + (gamma/2) z^2 with
    gamma > 1/(4 nu) (default 1/(2 nu)); the inverse map fhat'^{-1} is
    the unique real root of a cubic, computed by `student_t_dual_root`.
    """

    kind = "student_t"

    def __init__(self, targets, nu=1.0, gamma=None):
        if nu <= 0:
            raise ValueError("degrees of freedom must be positive")
        self.targets = np.asarray(targets, dtype=float)
        self.nu = float(nu)
        self.gamma = 0.5 / self.nu if gamma is None else float(gamma)
        if self.gamma <= 0.25 / self.nu:
            raise ValueError("gamma must exceed 1/(4*nu)")

    def _b(self, idx):
        return self.targets if idx is None else self.targets[np.asarray(idx)]

    def value(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        d = z - self._b(idx)
        return np.log1p(d * d / self.nu)

    def grad(self, z, idx=None):
        z = np.asarray(z, dtype=float)
        return _std_grad(z, self._b(idx), self.nu)

    def _root(self, xi, idx):
        return student_t_dual_root(
            np.asarray(xi, dtype=float), self._b(idx), self.gamma, self.nu
        )

    def conj_val(self, xi, idx=None):
        xi = np.asarray(xi, dtype=float)
        b = self._b(idx)
        z = self._root(xi, idx)
        fhat = np.log1p((z - b) ** 2 / self.nu) + 0.5 * self.gamma * z * z
        return xi * z - fhat

    def conj_grad(self, xi, idx=None):
        return self._root(xi, idx)

    def conj_hess(self, xi, idx=None):
        z = self._root(xi, idx)
        return 1.0 / (_std_hess(z, self._b(idx), self.nu) + self.gamma)

    def in_domain(self, xi):
        return bool(np.all(np.isfinite(np.asarray(xi, dtype=float))))

    def dual_start(self):
        return 0.0

    def smoothness(self, N):
        return np.full(N, 2.0 / self.nu)


def make_loss(kind, targets=None, nu=1.0, gamma=None):
    """Build a loss family from its kind string.

    'logistic' ignores targets (labels get absorbed into the data rows);
    'squared' and 'student_t' require per-sample targets.
    """
    if kind == "logistic":
        return Logistic()
    if targets is None:
        raise ValueError(f"{kind} loss requires targets")
    if kind == "squared":
        return Squared(targets)
    if kind == "student_t":
        return StudentT(targets, nu=nu, gamma=gamma)
    raise ValueError(f"unknown loss kind: {kind!r}")
