"""Composite problem container and its oracle contracts.

The objective is psi(x) = (1/N) sum_i f_i(A_i x) + phi(x) with scalar
per-sample losses (each row A_i is 1 x n), possibly weakly convex f_i
(modulus gamma_i), and a convex regularizer phi.

Problem-level constants are computed once at construction and cached:
    L_bar = max_i L_i ||A_i||^2      A_bar = max_i ||A_i||^2
    M_bar = (max_i gamma_i) A_bar    mu_star = min_i 1/(L_i + gamma_i)
    L     = (1/N) sum_i L_i ||A_i||^2
Step-size bounds derived from them live in `derive_constants`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .losses import Logistic, make_loss
from .regularizers import Regularizer, make_regularizer

__all__ = [
    "Problem",
    "ConstantsReport",
    "EvaluationError",
    "objective",
    "full_gradient",
    "batch_gradient",
    "derive_constants",
    "operator_norm",
    "weak_convexity_matvec",
    "build_problem",
]


class EvaluationError(RuntimeError):
    """An oracle produced a non-finite intermediate; carries the sample index."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


def operator_norm(M, tol=1e-8, max_iter=500):
    """Largest singular value of a dense or sparse matrix.

    Exact SVD when the matrix is small (m*n <= 1e4), otherwise power
    iteration on M^T M with fixed tolerance and iteration cap. A single
    row reduces to its Euclidean norm.
    """
    m, n = M.shape
    if m == 1 or n == 1:
        if sp.issparse(M):
            return float(np.sqrt(M.multiply(M).sum()))
        return float(np.linalg.norm(np.asarray(M).ravel()))
    if m * n <= 10_000:
        dense = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        return float(np.linalg.svd(dense, compute_uv=False)[0])
    rng = np.random.Generator(np.random.Philox(0))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        w = M.T @ (M @ v)
        lam = np.linalg.norm(w)
        if lam == 0.0:
            return 0.0
        v = w / lam
        sigma_new = float(np.sqrt(lam))
        if abs(sigma_new - sigma) <= tol * max(1.0, sigma_new):
            return sigma_new
        sigma = sigma_new
    return sigma


class Problem:
    """Immutable bundle of data rows, loss family, weak-convexity constants
    and regularizer. Oracles are pure and safe to call concurrently.

    Parameters
    ----------
    A : (N, n) ndarray or CSR matrix
        Stacked data rows A_i (one scalar loss per row).
    loss : LossFamily
    regularizer : Regularizer
    gammas : (N,) array, optional
        Weak-convexity constants; defaults to the family's constant.
    smoothness : (N,) array, optional
        Per-sample smoothness L_i of f_i; defaults to the family's values.
    """

    def __init__(self, A, loss, regularizer, gammas=None, smoothness=None):
        if not sp.issparse(A):
            A = np.asarray(A, dtype=float)
            if A.ndim != 2:
                raise ValueError("A must be a 2-d matrix of stacked rows")
        else:
            A = A.tocsr().astype(float)
        self.A = A
        self.N, self.n = A.shape
        self.loss = loss
        if not isinstance(regularizer, Regularizer):
            raise TypeError("regularizer must be a Regularizer instance")
        self.regularizer = regularizer
        if gammas is None:
            gammas = np.full(self.N, float(loss.gamma))
        self.gammas = np.asarray(gammas, dtype=float)
        if smoothness is None:
            smoothness = loss.smoothness(self.N)
        self.smoothness = np.asarray(smoothness, dtype=float)
        if self.gammas.shape != (self.N,) or self.smoothness.shape != (self.N,):
            raise ValueError("per-sample constant arrays must have length N")
        if np.any(self.gammas < 0):
            raise ValueError("weak-convexity constants must be nonnegative")

        if sp.issparse(A):
            sq = np.asarray(A.multiply(A).sum(axis=1)).ravel()
        else:
            sq = np.einsum("ij,ij->i", A, A)
        self.row_norms_sq = sq
        # cached problem constants; schedules read these
        self.L_bar = float(np.max(self.smoothness * sq)) if self.N else 0.0
        self.A_bar = float(np.max(sq)) if self.N else 0.0
        self.M_bar = float(np.max(self.gammas)) * self.A_bar
        self.L = float(np.mean(self.smoothness * sq)) if self.N else 0.0
        denom = self.smoothness + self.gammas
        self.mu_star = float(np.min(1.0 / denom)) if np.all(denom > 0) else None

    def rows(self, S):
        """Stacked batch rows A_b (duplicates kept verbatim), as b x n."""
        idx = np.asarray(S, dtype=int)
        return self.A[idx]

    def __repr__(self):
        return (
            f"Problem(N={self.N}, n={self.n}, loss={self.loss.kind}, "
            f"reg={self.regularizer.kind})"
        )


def _check_x(p, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x must have length {p.n}")
    if not np.all(np.isfinite(x)):
        raise EvaluationError("x has non-finite entries")
    return x


def _canonical_batch(p, S):
    idx = np.asarray(S, dtype=int).ravel()
    if idx.size == 0:
        raise ValueError("empty batch")
    if np.any((idx < 0) | (idx >= p.N)):
        raise ValueError("batch index out of range")
    # sorted accumulation order makes any enumeration of [N] take the exact
    # floating-point path of the full gradient
    return np.sort(idx)


def objective(p, x):
    """psi(x) = (1/N) sum_i f_i(A_i x) + phi(x)."""
    x = _check_x(p, x)
    z = p.A @ x
    vals = p.loss.value(z)
    if not np.all(np.isfinite(vals)):
        i = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise EvaluationError(f"loss value non-finite at sample {i}", sample=i)
    return float(np.mean(vals)) + float(p.regularizer.value(x))


def batch_gradient(p, x, S):
    """(1/|S|) sum_{i in S} A_i^T f_i'(A_i x), duplicates averaged in."""
    x = _check_x(p, x)
    idx = _canonical_batch(p, S)
    full = idx.size == p.N and idx[0] == 0 and idx[-1] == p.N - 1 and np.all(np.diff(idx) == 1)
    sub = p.A if full else p.A[idx]
    z = sub @ x
    g = p.loss.grad(z, None if full else idx)
    if not np.all(np.isfinite(g)):
        i = int(np.flatnonzero(~np.isfinite(g))[0])
        raise EvaluationError(
            f"loss derivative non-finite at sample {int(idx[i])}", sample=int(idx[i])
        )
    out = sub.T @ g
    return np.asarray(out).ravel() / idx.size


def full_gradient(p, x):
    """(1/N) sum_i A_i^T f_i'(A_i x); the batch path over all of [N]."""
    return batch_gradient(p, x, np.arange(p.N))


def weak_convexity_matvec(p, S, x):
    """M_S x with M_S = (1/|S|) sum_{i in S} gamma_i A_i^T A_i."""
    idx = np.asarray(S, dtype=int)
    gam = p.gammas[idx]
    if not np.any(gam):
        return np.zeros(p.n)
    sub = p.A[idx]
    out = sub.T @ (gam * (sub @ np.asarray(x, dtype=float)))
    return np.asarray(out).ravel() / idx.size


@dataclass(frozen=True)
class ConstantsReport:
    """Problem constants plus step-size bounds for a given (m, b).

    alpha_hat : largest step the variance-reduced proximal iteration
        tolerates per the stability bound, scaled by eta_bar < 1.
    alpha_qlinear : smaller bound under which strongly convex problems
        contract q-linearly per outer loop.
    """

    L_bar: float
    A_bar: float
    M_bar: float
    mu_star: float
    L: float
    b: int
    m: int
    eta_bar: float
    alpha_hat: float
    alpha_qlinear: float


def derive_constants(p, b, m=10, eta_bar=0.9):
    """Compute the cached constants and the step bounds for batch size b.

    alpha_hat = eta_bar / max{2L + M_bar, (1 + m/sqrt(2b)) L_bar + max{L, M_bar}}
    alpha_qlinear = 1 / (L + sqrt(2/b) m L_bar)
    """
    if b < 1:
        raise ValueError("batch size must be at least 1")
    if p.mu_star is None:
        raise ValueError("L_i + gamma_i = 0 for some sample; conjugate curvature unbounded")
    denom_hat = max(
        2.0 * p.L + p.M_bar,
        (1.0 + m / np.sqrt(2.0 * b)) * p.L_bar + max(p.L, p.M_bar),
    )
    alpha_hat = eta_bar / denom_hat if denom_hat > 0 else np.inf
    denom_ql = p.L + np.sqrt(2.0 / b) * m * p.L_bar
    alpha_ql = 1.0 / denom_ql if denom_ql > 0 else np.inf
    return ConstantsReport(
        L_bar=p.L_bar,
        A_bar=p.A_bar,
        M_bar=p.M_bar,
        mu_star=p.mu_star,
        L=p.L,
        b=int(b),
        m=int(m),
        eta_bar=float(eta_bar),
        alpha_hat=float(alpha_hat),
        alpha_qlinear=float(alpha_ql),
    )


def build_problem(features, targets, loss_kind, regularizer=None, reg_kind="l1",
                  lam=0.0, ridge=0.0, nu=1.0, gamma=None):
    """Assemble a Problem from raw data.

    For the logistic loss the +-1 labels are absorbed into the rows
    (A_i = b_i * a_i) and the family itself is parameter free; squared and
    student_t keep the targets as per-sample parameters.
    """
    if regularizer is None:
        regularizer = make_regularizer(reg_kind, lam=lam, ridge=ridge)
    if loss_kind == "logistic":
        t = np.asarray(targets, dtype=float)
        if not np.all(np.isin(t, (-1.0, 1.0))):
            raise ValueError("logistic targets must be +-1 labels")
        if sp.issparse(features):
            A = sp.diags(t) @ features.tocsr()
        else:
            A = np.asarray(features, dtype=float) * t[:, None]
        return Problem(A, Logistic(), regularizer)
    loss = make_loss(loss_kind, targets=targets, nu=nu, gamma=gamma)
    return Problem(features, loss, regularizer)
