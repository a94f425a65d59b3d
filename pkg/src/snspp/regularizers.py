"""Convex regularizers with proximity operators, Moreau envelopes, and
elements of the Clarke differential of the prox.

Every regularizer here is convex, proper and closed, so the prox is
firmly nonexpansive and its generalized Jacobian is a symmetric PSD
operator with eigenvalues in [0, 1]. The supported families are all
separable, which keeps the Jacobian diagonal.
"""

import numpy as np

__all__ = ["Regularizer", "L1", "L1Ridge", "Zero", "make_regularizer"]


class Regularizer:
    """Base interface: value, prox, prox Jacobian diagonal, Moreau envelope."""

    kind = None

    def value(self, x):
        raise NotImplementedError

    def prox(self, x, alpha):
        """argmin_z alpha*phi(z) + 0.5*||x-z||^2, componentwise."""
        raise NotImplementedError

    def prox_jacobian(self, x, alpha):
        """Diagonal of one element of the Clarke differential of prox(., alpha) at x."""
        raise NotImplementedError

    def prox_diag(self, x, steps):
        """Prox with a per-coordinate step vector (diagonal-metric update)."""
        raise NotImplementedError

    def moreau_env(self, x, alpha):
        """env_{alpha*phi}(x) = min_z alpha*phi(z) + 0.5*||x-z||^2."""
        raise NotImplementedError

    def strong_convexity(self):
        """Modulus of strong convexity of phi (0 if merely convex)."""
        return 0.0


class Zero(Regularizer):
    """phi = 0; prox is the identity."""

    kind = "zero"

    def value(self, x):
        return 0.0

    def prox(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        return np.array(x, dtype=float, copy=True)

    def prox_jacobian(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        return np.ones_like(np.asarray(x, dtype=float))

    def prox_diag(self, x, steps):
        return np.array(x, dtype=float, copy=True)

    def moreau_env(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        return 0.0


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


class L1(Regularizer):
    """phi(x) = lam * ||x||_1.

    The prox is soft-thresholding at level alpha*lam. The Jacobian
    element at a tie |x_i| = alpha*lam takes the 0 branch.
    """

    kind = "l1"

    def __init__(self, lam):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        self.lam = float(lam)

    def value(self, x):
        return self.lam * float(np.sum(np.abs(x)))

    def prox(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        return _soft_threshold(np.asarray(x, dtype=float), alpha * self.lam)

    def prox_jacobian(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        x = np.asarray(x, dtype=float)
        return (np.abs(x) > alpha * self.lam).astype(float)

    def prox_diag(self, x, steps):
        x = np.asarray(x, dtype=float)
        return _soft_threshold(x, np.asarray(steps, dtype=float) * self.lam)

    def moreau_env(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        x = np.asarray(x, dtype=float)
        p = self.prox(x, alpha)
        return alpha * self.lam * float(np.sum(np.abs(p))) + 0.5 * float(
            np.sum((x - p) ** 2)
        )


class L1Ridge(Regularizer):
    """phi(x) = lam * ||x||_1 + (mu/2) * ||x||^2, strongly convex for mu > 0.

    prox: soft-threshold at alpha*lam, then scale by 1/(1 + alpha*mu).
    """

    kind = "l1_plus_ridge"

    def __init__(self, lam, mu):
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        if mu < 0:
            raise ValueError("ridge modulus must be nonnegative")
        self.lam = float(lam)
        self.mu = float(mu)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.lam * float(np.sum(np.abs(x))) + 0.5 * self.mu * float(
            np.sum(x**2)
        )

    def prox(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        x = np.asarray(x, dtype=float)
        return _soft_threshold(x, alpha * self.lam) / (1.0 + alpha * self.mu)

    def prox_jacobian(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        x = np.asarray(x, dtype=float)
        return (np.abs(x) > alpha * self.lam).astype(float) / (1.0 + alpha * self.mu)

    def prox_diag(self, x, steps):
        x = np.asarray(x, dtype=float)
        steps = np.asarray(steps, dtype=float)
        return _soft_threshold(x, steps * self.lam) / (1.0 + steps * self.mu)

    def moreau_env(self, x, alpha):
        if alpha <= 0:
            raise ValueError("step must be positive")
        x = np.asarray(x, dtype=float)
        p = self.prox(x, alpha)
        return (
            alpha * self.lam * float(np.sum(np.abs(p)))
            + 0.5 * alpha * self.mu * float(np.sum(p**2))
            + 0.5 * float(np.sum((x - p) ** 2))
        )

    def strong_convexity(self):
        return self.mu


def make_regularizer(kind, lam=0.0, ridge=0.0):
    """Build a regularizer from its kind string: 'l1', 'l1_plus_ridge' or 'zero'."""
    if kind == "zero":
        return Zero()
    if kind == "l1":
        return L1(lam)
    if kind == "l1_plus_ridge":
        return L1Ridge(lam, ridge)
    raise ValueError(f"unknown regularizer kind: {kind!r}")
