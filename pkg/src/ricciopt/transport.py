"""Wasserstein-1 distance between small discrete measures.

Two solvers share one problem type: an entropic solver used in production
and an exact linear-programming solver used as a reference on small
supports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import _backend
from .errors import InvalidInputError, SupportSizeError, TransportConvergenceError

DEFAULT_EPS_REL = 0.01
DEFAULT_MAX_ITER = 10_000
DEFAULT_TOL = 1e-9
# Sinkhorn sweeps before switching to Newton steps on the row potentials
SINKHORN_WARM_SWEEPS = 50
EXACT_MAX_SUPPORT = 16


def _mass_of(measure):
    m = getattr(measure, "mass", measure)
    return np.asarray(m, dtype=float).reshape(-1)


@dataclass
class TransportProblem:
    """Move ``mu`` onto ``nu`` under ``cost``.

    ``mu`` and ``nu`` are :class:`~ricciopt.graph.VertexMeasure` objects or
    plain mass vectors; ``cost[a, b]`` is the ground distance from the
    ``a``-th support point of ``mu`` to the ``b``-th of ``nu``.  A missing
    ``epsilon`` means ``0.01 * max(cost)``.
    """

    mu: object
    nu: object
    cost: np.ndarray
    epsilon: float | None = None
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL

    def arrays(self):
        """Validated ``(a, b, C)``."""
        a, b = _mass_of(self.mu), _mass_of(self.nu)
        C = np.asarray(self.cost, dtype=float)
        if C.shape != (a.size, b.size):
            raise InvalidInputError(f"cost shape {C.shape} does not match supports {(a.size, b.size)}")
        if a.size == 0 or b.size == 0:
            raise InvalidInputError("empty support")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise InvalidInputError("cost entries must be finite and nonnegative")
        for name, m in (("mu", a), ("nu", b)):
            if np.any(m < 0) or not np.all(np.isfinite(m)):
                raise InvalidInputError(f"{name} has negative or non-finite mass")
            if abs(m.sum() - 1.0) > 1e-9:
                raise InvalidInputError(f"{name} sums to {m.sum():.12g}, expected 1")
        return a, b, C


def _canonical(a, b, C):
    """Orient the problem so that swapping ``mu`` and ``nu`` solves the same instance."""
    if a.size != b.size:
        return (a, b, C) if a.size < b.size else (b, a, C.T)
    key_fwd = np.concatenate([a, b, C.ravel()])
    key_rev = np.concatenate([b, a, C.T.ravel()])
    diff = np.flatnonzero(key_fwd != key_rev)
    if diff.size and key_rev[diff[0]] < key_fwd[diff[0]]:
        return b, a, C.T
    return a, b, C


def _drop_empty(a, b, C):
    ka, kb = a > 0, b > 0
    return a[ka], b[kb], C[np.ix_(ka, kb)]


def sinkhorn_w1(problem: TransportProblem, backend="auto", return_info=False):
    """Transport cost of the converged entropic plan.

    Log-domain Sinkhorn sweeps, polished by Newton steps on the dual
    potentials when plain sweeps stall.  Convergence means the L1 marginal
    violation is below ``problem.tol``.

    Raises
    ------
    TransportConvergenceError
        If ``max_iter`` iterations do not reach the tolerance.
    """
    a, b, C = _canonical(*_drop_empty(*problem.arrays()))
    m, n = C.shape
    eps = problem.epsilon
    if eps is not None and not eps > 0:
        raise InvalidInputError("epsilon must be positive")
    kern = _backend.get(backend)
    mass = np.ascontiguousarray(np.concatenate([a, b]))
    mptr = np.array([0, m, m + n], dtype=np.int64)
    vals, iters, viol, status = kern.sinkhorn_batch(
        mass, mptr, np.zeros(1, dtype=np.int64), np.ones(1, dtype=np.int64),
        np.ascontiguousarray(C.ravel()), np.array([0, m * n], dtype=np.int64),
        DEFAULT_EPS_REL, float(eps or 0.0), int(problem.max_iter), float(problem.tol), SINKHORN_WARM_SWEEPS,
    )
    if status[0] != 0:
        raise TransportConvergenceError(viol[0], iters[0])
    value = max(float(vals[0]), 0.0)
    if return_info:
        return value, {"iterations": int(iters[0]), "violation": float(viol[0])}
    return value


def exact_w1(problem: TransportProblem):
    """Optimal transport cost by linear programming (HiGHS).

    Only for supports of at most 16 points per side.
    """
    a, b, C = problem.arrays()
    if a.size > EXACT_MAX_SUPPORT or b.size > EXACT_MAX_SUPPORT:
        raise SupportSizeError(f"exact solver limited to {EXACT_MAX_SUPPORT} support points, got {a.size}x{b.size}")
    a, b, C = _canonical(*_drop_empty(a, b, C))
    m, n = C.shape
    if m == 1 or n == 1:
        return float(np.sum(a[:, None] * b[None, :] * C))
    if m == n and np.array_equal(a, b) and not np.any(np.diag(C)):
        # the identity plan is feasible and costs nothing
        return 0.0
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:  # pragma: no cover - feasible by construction
        raise InvalidInputError(f"exact transport LP failed: {res.message}")
    return max(float(res.fun), 0.0)
