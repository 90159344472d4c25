"""Deterministic loss oracles over per-vertex parameters."""
from __future__ import annotations

import numpy as np


class LossOracle:
    """Loss ``L(theta) >= 0`` with its gradient.

    Subclasses implement :meth:`value_and_grad`; calling the oracle is the
    same thing.
    """

    def value_and_grad(self, theta):
        raise NotImplementedError

    def value(self, theta):
        return self.value_and_grad(theta)[0]

    def grad(self, theta):
        return self.value_and_grad(theta)[1]

    def __call__(self, theta):
        return self.value_and_grad(theta)

    def hessian(self, theta):
        """Analytic Hessian when known, else ``None``."""
        return None


class QuadraticLoss(LossOracle):
    """``1/2 sum_i lam_i (theta_i - c_i)^2`` with eigenvalues log-spaced in ``[1, condition]``."""

    def __init__(self, size, condition=1.0, center=None):
        if condition < 1:
            raise ValueError("condition number must be >= 1")
        self.size = int(size)
        self.condition = float(condition)
        self.eigenvalues = np.logspace(0.0, np.log10(condition), self.size) if size > 1 else np.ones(1)
        self.center = np.zeros(self.size) if center is None else np.asarray(center, dtype=float)

    def value_and_grad(self, theta):
        r = np.asarray(theta, dtype=float) - self.center
        g = self.eigenvalues * r
        return 0.5 * float(np.dot(r, g)), g

    def hessian(self, theta):
        return np.diag(self.eigenvalues)


class RosenbrockSum(LossOracle):
    """Chained Rosenbrock ``sum_i 100 (theta_{i+1} - theta_i^2)^2 + (1 - theta_i)^2``."""

    def __init__(self, a=1.0, b=100.0):
        self.a = a
        self.b = b

    def value_and_grad(self, theta):
        x = np.asarray(theta, dtype=float)
        if x.size < 2:
            return 0.0, np.zeros_like(x)
        u = x[1:] - x[:-1] ** 2
        v = self.a - x[:-1]
        val = float(np.sum(self.b * u * u + v * v))
        g = np.zeros_like(x)
        g[:-1] += -4.0 * self.b * u * x[:-1] - 2.0 * v
        g[1:] += 2.0 * self.b * u
        return val, g

    def hessian(self, theta):
        x = np.asarray(theta, dtype=float)
        n = x.size
        H = np.zeros((n, n))
        for i in range(n - 1):
            H[i, i] += 12.0 * self.b * x[i] ** 2 - 4.0 * self.b * x[i + 1] + 2.0
            H[i + 1, i + 1] += 2.0 * self.b
            H[i, i + 1] += -4.0 * self.b * x[i]
            H[i + 1, i] += -4.0 * self.b * x[i]
        return H


class SyntheticEmbedding(LossOracle):
    """Pull parameters toward stored targets: ``1/2 sum_i (theta_i - t_i)^2``."""

    def __init__(self, targets):
        self.targets = np.asarray(targets, dtype=float)

    def value_and_grad(self, theta):
        r = np.asarray(theta, dtype=float) - self.targets
        return 0.5 * float(np.dot(r, r)), r

    def hessian(self, theta):
        return np.eye(self.targets.size)


class ZeroLoss(LossOracle):
    """Constant zero loss; turns the coupled flow into plain normalized Ricci flow."""

    def value_and_grad(self, theta):
        return 0.0, np.zeros(np.asarray(theta).shape)

    def hessian(self, theta):
        n = np.asarray(theta).size
        return np.zeros((n, n))


def finite_difference_grad(loss, theta, h=1e-6):
    """Central differences of ``loss.value``."""
    x = np.asarray(theta, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (loss.value(xp) - loss.value(xm)) / (2 * h)
    return g
