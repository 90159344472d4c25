"""Ollivier-Ricci curvature fields and discrete differential operators.

Edge curvature is ``kappa_e = 1 - W1(mu_i, mu_j) / d(i, j)`` with lazy
random-walk measures; vertex curvature is the weight-averaged curvature of
incident edges.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import _backend
from .errors import DegenerateEdgeError, TransportConvergenceError
from .graph import distances_from, measure_arrays, vertex_measure
from .transport import (
    DEFAULT_EPS_REL,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    EXACT_MAX_SUPPORT,
    SINKHORN_WARM_SWEEPS,
    TransportProblem,
    exact_w1,
    sinkhorn_w1,
)


def default_norm_p(n):
    """Lebesgue exponent ``max(2, (n + 2) / 2)`` used by the curvature norms."""
    return max(2.0, (n + 2) / 2.0)


@dataclass(frozen=True)
class CurvatureOptions:
    """How curvature is computed.

    Attributes
    ----------
    alpha : float
        Idleness of the random-walk measures.
    oracle : bool
        Use the exact LP transport solver when both supports have at most
        16 points (slow, for validation).
    hop : bool
        Ground distance in hops instead of metric lengths.
    """

    alpha: float = 0.5
    oracle: bool = False
    hop: bool = False
    eps_rel: float = DEFAULT_EPS_REL
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    backend: str = "auto"


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Per-edge and per-vertex curvature.

    ``grad_ric`` is oriented from the lower vertex id to the higher one.
    """

    kappa: np.ndarray
    ric_vertex: np.ndarray
    ric_edge_tensor: np.ndarray
    grad_ric: np.ndarray
    w1: np.ndarray
    distance: np.ndarray

    @classmethod
    def from_kappa(cls, graph, metric, kappa, w1=None, distance=None):
        kappa = np.asarray(kappa, dtype=float)
        ric = _weighted_vertex_mean(graph, metric, kappa)
        e = graph.edges
        grad = np.sqrt(metric.w) * (ric[e[:, 1]] - ric[e[:, 0]])
        M = graph.edge_count
        return cls(
            kappa,
            ric,
            kappa * metric.g,
            grad,
            np.full(M, np.nan) if w1 is None else np.asarray(w1, dtype=float),
            np.full(M, np.nan) if distance is None else np.asarray(distance, dtype=float),
        )


def _weighted_vertex_mean(graph, metric, edge_values):
    num = np.zeros(graph.vertex_count)
    e = graph.edges
    wk = metric.w * edge_values
    np.add.at(num, e[:, 0], wk)
    np.add.at(num, e[:, 1], wk)
    out = np.zeros(graph.vertex_count)
    nz = metric.vol > 0
    out[nz] = num[nz] / metric.vol[nz]
    return out


def edge_curvature(graph, metric, e, alpha=0.5, oracle=False, hop=False):
    """Ollivier-Ricci curvature of edge ``e`` (an edge id or a vertex pair).

    Reference path: measures from :func:`vertex_measure` and a dense
    Dijkstra for the cost; :func:`curvature_field` is the batched version.
    """
    if isinstance(e, (tuple, list)):
        e = graph.edge_index(*e)
    i, j = (int(v) for v in graph.edges[e])
    mu = vertex_measure(graph, metric, i, alpha)
    nu = vertex_measure(graph, metric, j, alpha)
    D = distances_from(graph, metric, list(mu.support), hop=hop)
    C = D[:, list(nu.support)]
    d = float(distances_from(graph, metric, [i], hop=hop)[0, j])
    if not d > 0:
        raise DegenerateEdgeError(e)
    prob = TransportProblem(mu, nu, C)
    if oracle and len(mu.support) <= EXACT_MAX_SUPPORT and len(nu.support) <= EXACT_MAX_SUPPORT:
        w1 = exact_w1(prob)
    else:
        w1 = sinkhorn_w1(prob)
    return 1.0 - w1 / d


def curvature_field(graph, metric, alpha=0.5, options: CurvatureOptions | None = None):
    """Curvature of every edge plus vertex averages and the edge gradient.

    Edges between isolated parts are never present, so isolated vertices
    simply get zero vertex curvature.
    """
    opt = options or CurvatureOptions(alpha=alpha)
    kern = _backend.get(opt.backend)
    with_self = opt.alpha > 0
    lengths = np.ones(graph.edge_count) if opt.hop else metric.length
    slot_len = np.ascontiguousarray(lengths[graph.slot_edge])
    C, coff, d_uv = kern.build_edge_problems(
        graph.indptr, graph.indices, graph.slot_edge, graph.rev, graph.edges, slot_len, with_self
    )
    mptr, mass = measure_arrays(graph, metric, opt.alpha)
    rows = np.ascontiguousarray(graph.edges[:, 0])
    cols = np.ascontiguousarray(graph.edges[:, 1])
    if graph.edge_count == 0:
        return CurvatureField.from_kappa(graph, metric, np.zeros(0), np.zeros(0), np.zeros(0))
    bad = np.flatnonzero(~(d_uv > 0))
    if bad.size:
        raise DegenerateEdgeError(int(bad[0]))
    if opt.oracle:
        w1 = _oracle_batch(mptr, mass, rows, cols, C, coff, opt)
    else:
        w1, iters, viol, status = kern.sinkhorn_batch(
            mass, mptr, rows, cols, C, coff, opt.eps_rel, 0.0, opt.max_iter, opt.tol, SINKHORN_WARM_SWEEPS
        )
        failed = np.flatnonzero(status != 0)
        if failed.size:
            k = int(failed[0])
            raise TransportConvergenceError(viol[k], iters[k], edge=k)
        w1 = np.maximum(w1, 0.0)
    kappa = 1.0 - w1 / d_uv
    return CurvatureField.from_kappa(graph, metric, kappa, w1, d_uv)


def _oracle_batch(mptr, mass, rows, cols, C, coff, opt):
    out = np.empty(rows.size)
    for k in range(rows.size):
        a = mass[mptr[rows[k]]:mptr[rows[k] + 1]]
        b = mass[mptr[cols[k]]:mptr[cols[k] + 1]]
        prob = TransportProblem(a, b, C[coff[k]:coff[k + 1]].reshape(a.size, b.size),
                                max_iter=opt.max_iter, tol=opt.tol)
        if a.size <= EXACT_MAX_SUPPORT and b.size <= EXACT_MAX_SUPPORT:
            out[k] = exact_w1(prob)
        else:
            out[k] = sinkhorn_w1(prob, backend=opt.backend)
    return out


def curvature_norm(field: CurvatureField, metric, p=2.0, order=0):
    """Weighted L^p norm of the curvature (``order=0``) or its gradient (``order=1``).

    Order 0 weighs vertices by volume, order 1 weighs edges by ``g``.
    ``p = math.inf`` gives the largest absolute value.
    """
    if order == 0:
        x, wt = field.ric_vertex, metric.vol
    elif order == 1:
        x, wt = field.grad_ric, metric.g
    else:
        raise ValueError("order must be 0 or 1")
    if not (p == math.inf or p >= 1):
        raise ValueError("p must be >= 1 or inf")
    if x.size == 0:
        return 0.0
    ax = np.abs(x)
    if p == math.inf:
        return float(ax.max())
    return float(np.sum(ax ** p * wt) ** (1.0 / p))


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def graph_gradient(graph, metric, f):
    """Edge field ``sqrt(w_ij) (f_j - f_i)`` for each edge ``i < j``."""
    f = np.asarray(f, dtype=float)
    e = graph.edges
    return np.sqrt(metric.w) * (f[e[:, 1]] - f[e[:, 0]])


def graph_laplacian(graph, metric, f):
    """Vertex field ``sum_j w_ij (f_j - f_i)``."""
    f = np.asarray(f, dtype=float)
    e = graph.edges
    flux = metric.w * (f[e[:, 1]] - f[e[:, 0]])
    out = np.zeros(graph.vertex_count)
    np.add.at(out, e[:, 0], flux)
    np.add.at(out, e[:, 1], -flux)
    return out


def _edge_sum(graph, edge_values):
    out = np.zeros(graph.vertex_count)
    np.add.at(out, graph.edges[:, 0], edge_values)
    np.add.at(out, graph.edges[:, 1], edge_values)
    return out


@dataclass(frozen=True, eq=False)
class BochnerTerms:
    """Per-vertex pieces of the discrete Bochner balance.

    ``residual = gamma2 - hessian_sq - curvature_term``; it is a report, not
    something expected to vanish.
    """

    gamma2: np.ndarray
    hessian_sq: np.ndarray
    curvature_term: np.ndarray
    residual: np.ndarray


def _vertex_gradients(graph, metric, f):
    """Sparse ``V x V`` matrix whose row ``i`` has ``sqrt(w_ik) (f_k - f_i)`` at each neighbour ``k``."""
    V = graph.vertex_count
    src = np.repeat(np.arange(V), graph.degree)
    vals = np.sqrt(metric.w[graph.slot_edge]) * (f[graph.indices] - f[src])
    return sparse.csr_matrix((vals, graph.indices, graph.indptr), shape=(V, V))


def bochner_decomposition(graph, metric, f, field: CurvatureField, curvature_term="vertex"):
    """Split ``1/2 Lap |grad f|^2`` into gamma2, Hessian and curvature parts.

    Parameters
    ----------
    curvature_term : {"vertex", "averaged"}
        ``"vertex"`` uses ``ric_i |grad f|^2(i)``; ``"averaged"`` uses
        ``1/2 sum_j w_ij (ric_i + ric_j) (f_j - f_i)^2``.

    Notes
    -----
    The Hessian term needs a gradient at each vertex.  Vertex ``i`` gets the
    vector indexed by vertex ids with entry ``sqrt(w_ik) (f_k - f_i)`` for
    every neighbour ``k`` and zero elsewhere, so components of two vertex
    gradients are paired through shared neighbours.  Then
    ``hessian_sq(i) = 1/2 sum_j w_ij |grad_j - grad_i|^2``.
    """
    f = np.asarray(f, dtype=float)
    e = graph.edges
    w = metric.w
    df = f[e[:, 1]] - f[e[:, 0]]
    grad_sq = _edge_sum(graph, w * df * df)
    lap_f = graph_laplacian(graph, metric, f)
    dlap = lap_f[e[:, 1]] - lap_f[e[:, 0]]
    inner = _edge_sum(graph, w * df * dlap)
    gamma2 = 0.5 * graph_laplacian(graph, metric, grad_sq) - inner

    G = _vertex_gradients(graph, metric, f)
    M = graph.edge_count
    inc = sparse.csr_matrix(
        (np.concatenate([np.ones(M), -np.ones(M)]),
         (np.concatenate([np.arange(M), np.arange(M)]), np.concatenate([e[:, 1], e[:, 0]]))),
        shape=(M, graph.vertex_count),
    )
    D = inc @ G
    diff_sq = np.asarray(D.multiply(D).sum(axis=1)).reshape(-1)
    hess = 0.5 * _edge_sum(graph, w * diff_sq)

    ric = field.ric_vertex
    if curvature_term == "vertex":
        curv = ric * grad_sq
    elif curvature_term == "averaged":
        curv = 0.5 * _edge_sum(graph, w * (ric[e[:, 0]] + ric[e[:, 1]]) * df * df)
    else:
        raise ValueError("curvature_term must be 'vertex' or 'averaged'")
    return BochnerTerms(gamma2, hess, curv, gamma2 - hess - curv)


def write_curvature_csv(path, graph, metric, field):
    """Dump ``edge_i, edge_j, g, w, kappa, grad_ric`` per edge."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["edge_i", "edge_j", "g", "w", "kappa", "grad_ric"])
        for k, (i, j) in enumerate(graph.edges):
            wr.writerow([int(i), int(j), repr(float(metric.g[k])), repr(float(metric.w[k])),
                         repr(float(field.kappa[k])), repr(float(field.grad_ric[k]))])
