"""Graph Betti numbers, the curvature bound on their sum, and simplification rate."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import UndefinedRateError


@dataclass(frozen=True)
class TopologySnapshot:
    """Betti numbers of a graph seen as a 1-complex.

    ``bound_rhs`` and ``bound_satisfied`` are filled by :func:`betti_bound`.
    """

    b0: int
    b1: int
    vertices: int
    edges: int
    bound_rhs: float = float("nan")
    bound_satisfied: bool | None = None

    @property
    def euler(self):
        return self.vertices - self.edges

    @property
    def betti_sum(self):
        return self.b0 + self.b1


def components(graph):
    V = graph.vertex_count
    e = graph.edges
    A = sparse.csr_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(V, V))
    return connected_components(A, directed=False)


def betti(graph):
    b0, _ = components(graph)
    V, E = graph.vertex_count, graph.edge_count
    return TopologySnapshot(int(b0), int(E - V + b0), V, E)


def betti_bound(snapshot0: TopologySnapshot, field, metric, snapshot: TopologySnapshot | None = None):
    """Compare ``b0 + b1`` with ``1/2 sum_i ric_i^2 vol_i + euler_0``.

    Recorded only; the inequality is not expected to hold on graphs.
    ``snapshot`` is the current topology (defaults to ``snapshot0``).
    """
    cur = snapshot0 if snapshot is None else snapshot
    rhs = 0.5 * float(np.sum(field.ric_vertex ** 2 * metric.vol)) + snapshot0.euler
    return replace(cur, bound_rhs=rhs, bound_satisfied=bool(cur.betti_sum <= rhs))


def simplification_rate(snapshot0: TopologySnapshot, snapshot_t: TopologySnapshot):
    """``(sum0 - sum_t) / sum0`` over Betti sums; negative when topology grew."""
    s0 = snapshot0.betti_sum
    if s0 <= 0:
        raise UndefinedRateError("initial Betti sum is zero")
    return (s0 - snapshot_t.betti_sum) / s0


def betti_excluding(graph, inserted):
    """Betti numbers of ``graph`` with the ``inserted`` edges left out."""
    if not len(inserted):
        return betti(graph)
    drop = {tuple(sorted(map(int, p))) for p in inserted}
    keep = [k for k, (i, j) in enumerate(graph.edges) if (int(i), int(j)) not in drop]
    V = graph.vertex_count
    e = graph.edges[keep]
    A = sparse.csr_matrix((np.ones(e.shape[0]), (e[:, 0], e[:, 1])), shape=(V, V))
    b0, _ = connected_components(A, directed=False)
    return TopologySnapshot(int(b0), int(e.shape[0] - V + b0), V, int(e.shape[0]))
