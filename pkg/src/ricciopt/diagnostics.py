"""Closed-form scalar diagnostics reported alongside a run.

None of these are enforced; they are computed and written to the report.
Logarithms are natural, so entropies are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BoundaryError, InvalidInputError


@dataclass(frozen=True)
class HoloConfig:
    p_drop: float = 0.5
    region: tuple = ()
    G_N: float = 1.0
    hbar: float = 1.0
    eps_quantum: float = 0.01

    def validate(self, graph=None):
        if not 0.0 <= self.p_drop <= 1.0:
            raise InvalidInputError("p_drop must lie in [0, 1]")
        if not (self.G_N > 0 and self.hbar > 0):
            raise InvalidInputError("G_N and hbar must be positive")
        if not 0.0 < self.eps_quantum < 1.0:
            raise InvalidInputError("eps_quantum must lie in (0, 1)")
        if graph is not None and any(not 0 <= int(v) < graph.vertex_count for v in self.region):
            raise InvalidInputError("region vertex out of range")
        return self


def entanglement_entropy(p):
    """Binary entropy ``-p log p - (1-p) log(1-p)`` with ``0 log 0 = 0``."""
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"probability {p} outside [0, 1]")
    return -sum(q * math.log(q) for q in (p, 1.0 - p) if q > 0.0)


class EntanglementBound(NamedTuple):
    s_ent: float
    area: float
    bound: float
    satisfied: bool
    rho_E: float


def cut_weight(graph, metric, region):
    inside = np.zeros(graph.vertex_count, dtype=bool)
    inside[np.asarray(list(region), dtype=np.int64)] = True
    e = graph.edges
    crossing = inside[e[:, 0]] != inside[e[:, 1]]
    return float(metric.w[crossing].sum())


def entanglement_bound(graph, metric, cfg: HoloConfig):
    """Entropy of the dropout probability against ``cut weight / (4 G_N)``.

    ``rho_E`` is the entropy divided by that bound (``inf`` for a zero cut
    with positive entropy).
    """
    cfg.validate(graph)
    region = set(int(v) for v in cfg.region)
    if not region or len(region) >= graph.vertex_count:
        raise BoundaryError("region must be a nonempty proper subset of the vertices")
    s = entanglement_entropy(cfg.p_drop)
    area = cut_weight(graph, metric, region)
    bound = area / (4.0 * cfg.G_N)
    if bound > 0:
        rho = s / bound
    else:
        rho = 0.0 if s == 0 else math.inf
    return EntanglementBound(s, area, bound, bool(s <= bound), rho)


def geometric_distortion(graph, metric_current, metric_reference):
    """Mean over vertices of the root-sum-square metric difference on incident edges."""
    g1 = np.asarray(metric_current.g)
    g0 = np.asarray(getattr(metric_reference, "g", metric_reference), dtype=float)
    if g1.shape != g0.shape or g1.size != graph.edge_count:
        raise InvalidInputError("metrics are defined on different edge sets")
    with np.errstate(over="ignore"):
        d2 = (g1 - g0) ** 2
    acc = np.zeros(graph.vertex_count)
    np.add.at(acc, graph.edges[:, 0], d2)
    np.add.at(acc, graph.edges[:, 1], d2)
    return float(np.mean(np.sqrt(acc)))


def robustness_bound(L_lip, rho, lambda_min_hess):
    """Relative output change bound ``2 L rho / sqrt(lambda_min)``.

    Returns ``inf`` when ``lambda_min_hess <= 0`` (no bound).
    """
    if L_lip < 0 or rho < 0:
        raise InvalidInputError("L_lip and rho must be nonnegative")
    if not lambda_min_hess > 0:
        return math.inf
    return 2.0 * L_lip * rho / math.sqrt(lambda_min_hess)


def decoherence_time(field, metric, cfg: HoloConfig):
    """Lower bound ``hbar / sqrt(sum ric^2 vol) * log(1 / eps_quantum)``; ``inf`` for zero curvature."""
    tr = float(np.sum(field.ric_vertex ** 2 * metric.vol))
    if not tr > 0:
        return math.inf
    return cfg.hbar / math.sqrt(tr) * math.log(1.0 / cfg.eps_quantum)


def finite_difference_hessian(loss, theta, h=1e-4, diagonal=False):
    """Hessian from central differences of the gradient, symmetrised.

    With ``diagonal=True`` only the diagonal is returned (as a vector).
    """
    x = np.asarray(theta, dtype=float)
    n = x.size
    if diagonal:
        d = np.empty(n)
        for i in range(n):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            d[i] = (loss.grad(xp)[i] - loss.grad(xm)[i]) / (2 * h)
        out = d
    else:
        H = np.empty((n, n))
        for i in range(n):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            H[:, i] = (loss.grad(xp) - loss.grad(xm)) / (2 * h)
        out = 0.5 * (H + H.T)
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("non-finite finite-difference Hessian")
    return out


def smallest_hessian_eigenvalue(loss, theta, h=1e-4):
    return float(np.linalg.eigvalsh(finite_difference_hessian(loss, theta, h))[0])


class HawkingTemperature(NamedTuple):
    value: float
    det_sign: float
    diagonal_approx: bool


def hawking_temperature(loss, theta, h=1e-4, max_full=64):
    """``sqrt(|det H|)`` of the finite-difference Hessian.

    Above ``max_full`` parameters only the Hessian diagonal is used and the
    result is flagged.  The sign of the determinant is returned separately.
    """
    x = np.asarray(theta, dtype=float)
    if x.size > max_full:
        d = finite_difference_hessian(loss, x, h, diagonal=True)
        sign = float(np.prod(np.sign(d)))
        logdet = float(np.sum(np.log(np.abs(d)))) if np.all(d != 0) else -math.inf
        return HawkingTemperature(math.exp(0.5 * logdet), sign, True)
    sign, logdet = np.linalg.slogdet(finite_difference_hessian(loss, x, h))
    return HawkingTemperature(math.exp(0.5 * logdet), float(sign), False)
