"""Discrete parameter manifold: graph structure, per-edge metric, measures and distances.

A graph carries vertex coordinates, one parameter value per vertex and an
undirected simple edge list.  The metric is diagonal: one positive value
``g_e`` per edge, with weight ``w_e = 1 / g_e`` and edge length
``sqrt(g_e)``.

Graph file format (one record per line, ``#`` starts a comment)::

    V <count> <dim> <n>
    v <id> <x_1> ... <x_dim> <theta>
    e <i> <j> [g]

Vertex ids run over ``0..count-1`` and each appears exactly once.  An edge
without ``g`` gets ``g = exp(beta_w * |x_i - x_j|^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import DegenerateVertexError, InvalidInputError

DEFAULT_G_FLOOR = 1e-6


def default_beta(n):
    """Coupling constant 0.1*sqrt(n) used for both the weights and the flow."""
    return 0.1 * math.sqrt(n)


def _readonly(arr):
    arr.setflags(write=False)
    return arr


class ParameterGraph:
    """Undirected simple graph with coordinates and per-vertex parameters.

    Edges are stored as ``(i, j)`` with ``i < j``; an edge's id is its
    position in :attr:`edges`.  Instances are treated as immutable; surgery
    builds new graphs through :meth:`with_edges`.
    """

    def __init__(self, coordinates, theta, edges, intrinsic_dim=None):
        coords = np.array(coordinates, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] < 1 or coords.shape[1] < 1:
            raise InvalidInputError("coordinates must be a (V, d) array with V >= 1, d >= 1")
        if not np.all(np.isfinite(coords)):
            raise InvalidInputError("non-finite coordinate")
        V = coords.shape[0]
        th = np.array(theta, dtype=float).reshape(-1)
        if th.shape[0] != V:
            raise InvalidInputError(f"theta has {th.shape[0]} entries for {V} vertices")
        e = np.array(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= V):
            raise InvalidInputError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise InvalidInputError("self-loop in edge list")
        e = np.sort(e, axis=1)
        keys = e[:, 0] * V + e[:, 1]
        if np.unique(keys).size != keys.size:
            raise InvalidInputError("duplicate edge in edge list")
        n = coords.shape[1] if intrinsic_dim is None else int(intrinsic_dim)
        if n < 1:
            raise InvalidInputError("intrinsic dimension must be >= 1")

        self.vertex_count = V
        self.dim = coords.shape[1]
        self.intrinsic_dim = n
        self.coordinates = _readonly(coords)
        self.theta = _readonly(th)
        self.edges = _readonly(e)
        self._build_adjacency()

    def _build_adjacency(self):
        V, e = self.vertex_count, self.edges
        M = e.shape[0]
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([np.arange(M), np.arange(M)])
        order = np.lexsort((dst, src))
        src, dst, eid = src[order], dst[order], eid[order]
        indptr = np.zeros(V + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=V), out=indptr[1:])
        # rev[s]: slot in row dst[s] that points back to src[s]
        pos = np.empty(2 * M, dtype=np.int64)
        pos[order] = np.arange(2 * M)
        rev = np.empty(2 * M, dtype=np.int64)
        rev[pos[:M]] = pos[M:]
        rev[pos[M:]] = pos[:M]
        self.indptr = _readonly(indptr)
        self.indices = _readonly(dst.astype(np.int64))
        self.slot_edge = _readonly(eid.astype(np.int64))
        self.rev = _readonly(rev)
        self.degree = _readonly(np.diff(indptr))

    @property
    def edge_count(self):
        return self.edges.shape[0]

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def incident_edges(self, i):
        return self.slot_edge[self.indptr[i]:self.indptr[i + 1]]

    def edge_index(self, i, j):
        """Id of edge {i, j}; raises KeyError when absent."""
        a, b = (i, j) if i < j else (j, i)
        row = self.indices[self.indptr[a]:self.indptr[a + 1]]
        k = np.searchsorted(row, b)
        if k < row.size and row[k] == b:
            return int(self.slot_edge[self.indptr[a] + k])
        raise KeyError((i, j))

    def has_edge(self, i, j):
        try:
            self.edge_index(i, j)
        except KeyError:
            return False
        return True

    def with_theta(self, theta):
        """Same structure, new parameter values (adjacency arrays are shared)."""
        th = np.array(theta, dtype=float).reshape(-1)
        if th.shape[0] != self.vertex_count:
            raise InvalidInputError("theta length mismatch")
        new = object.__new__(ParameterGraph)
        new.__dict__.update(self.__dict__)
        new.theta = _readonly(th)
        return new

    def with_edges(self, extra_edges):
        """New graph with ``extra_edges`` appended after the existing ones."""
        extra = np.array(extra_edges, dtype=np.int64).reshape(-1, 2)
        return ParameterGraph(
            self.coordinates, self.theta, np.concatenate([self.edges, extra]), self.intrinsic_dim
        )

    def __repr__(self):
        return f"ParameterGraph(V={self.vertex_count}, E={self.edge_count}, d={self.dim}, n={self.intrinsic_dim})"


@dataclass(frozen=True, eq=False)
class MetricState:
    """Per-edge metric with derived weights, edge lengths and vertex volumes.

    Build through :meth:`build` so the derived arrays stay consistent with
    ``g``.
    """

    g: np.ndarray
    g_floor: float
    w: np.ndarray
    length: np.ndarray
    vol: np.ndarray

    @classmethod
    def build(cls, graph, g, g_floor=DEFAULT_G_FLOOR):
        g = np.array(g, dtype=float).reshape(-1)
        if g.shape[0] != graph.edge_count:
            raise InvalidInputError(f"metric has {g.shape[0]} entries for {graph.edge_count} edges")
        if g_floor <= 0:
            raise InvalidInputError("g_floor must be positive")
        if not np.all(np.isfinite(g)):
            raise InvalidInputError("non-finite metric value")
        if g.size and g.min() < g_floor:
            raise InvalidInputError(f"metric value {g.min():g} below floor {g_floor:g}")
        w = 1.0 / g
        vol = np.zeros(graph.vertex_count)
        np.add.at(vol, graph.edges[:, 0], w)
        np.add.at(vol, graph.edges[:, 1], w)
        return cls(_readonly(g), float(g_floor), _readonly(w), _readonly(np.sqrt(g)), _readonly(vol))

    @property
    def edge_length(self):
        return self.length

    def replace(self, graph, g):
        """Same floor, new values."""
        return MetricState.build(graph, g, self.g_floor)


@dataclass(frozen=True)
class VertexMeasure:
    """Lazy random-walk probability measure around one vertex."""

    support: tuple
    mass: tuple
    alpha: float

    def as_arrays(self):
        return np.asarray(self.support, dtype=np.int64), np.asarray(self.mass, dtype=float)


def init_weights(graph, beta_w, g_floor=DEFAULT_G_FLOOR):
    """Gaussian edge weights ``w = exp(-beta_w |x_i - x_j|^2)`` and ``g = 1/w``."""
    if not beta_w > 0:
        raise InvalidInputError("beta_w must be positive")
    if not np.all(np.isfinite(graph.coordinates)):
        raise InvalidInputError("non-finite coordinate")
    e = graph.edges
    diff = graph.coordinates[e[:, 0]] - graph.coordinates[e[:, 1]]
    sq = np.einsum("ij,ij->i", diff, diff)
    g = np.exp(beta_w * sq)
    return MetricState.build(graph, np.maximum(g, g_floor), g_floor)


def theta_metric(graph, theta=None, g_floor=DEFAULT_G_FLOOR):
    """Alternative initialisation ``g_e = mean(theta_i^2, theta_j^2)`` clamped to the floor."""
    th = graph.theta if theta is None else np.asarray(theta, dtype=float)
    e = graph.edges
    g = 0.5 * (th[e[:, 0]] ** 2 + th[e[:, 1]] ** 2)
    return MetricState.build(graph, np.maximum(g, g_floor), g_floor)


def vertex_measure(graph, metric, i, alpha=0.5):
    """Mass ``alpha`` at ``i`` and ``(1-alpha) w_ij / sum_k w_ik`` on each neighbour.

    With ``alpha == 0`` the vertex itself is left out of the support.
    """
    if not 0.0 <= alpha < 1.0:
        raise InvalidInputError("idleness alpha must lie in [0, 1)")
    nbrs = graph.neighbors(i)
    if nbrs.size == 0:
        raise DegenerateVertexError(i)
    w = metric.w[graph.incident_edges(i)]
    p = (1.0 - alpha) * w / w.sum()
    if alpha > 0:
        return VertexMeasure((int(i),) + tuple(int(v) for v in nbrs), (float(alpha),) + tuple(p.tolist()), alpha)
    return VertexMeasure(tuple(int(v) for v in nbrs), tuple(p.tolist()), alpha)


def measure_arrays(graph, metric, alpha):
    """All vertex measures packed as ``(mptr, mass)`` in support order.

    Support of vertex ``i`` is ``[i] + neighbours`` when ``alpha > 0`` and
    just the neighbours otherwise, matching :func:`vertex_measure`.
    Isolated vertices get an empty support.
    """
    deg = graph.degree
    self_slot = 1 if alpha > 0 else 0
    sizes = np.where(deg > 0, deg + self_slot, 0)
    mptr = np.zeros(graph.vertex_count + 1, dtype=np.int64)
    np.cumsum(sizes, out=mptr[1:])
    mass = np.empty(mptr[-1])
    w_slot = metric.w[graph.slot_edge]
    row_sum = np.add.reduceat(w_slot, graph.indptr[:-1][deg > 0]) if w_slot.size else np.zeros(0)
    tot = np.zeros(graph.vertex_count)
    tot[deg > 0] = row_sum
    src = np.repeat(np.arange(graph.vertex_count), deg)
    slot_pos = mptr[src] + self_slot + (np.arange(graph.indptr[-1]) - graph.indptr[src])
    mass[slot_pos] = (1.0 - alpha) * w_slot / tot[src]
    if self_slot:
        mass[mptr[:-1][deg > 0]] = alpha
    return mptr, mass


def _csr_lengths(graph, metric, hop=False):
    lengths = np.ones(graph.edge_count) if hop else metric.length
    V = graph.vertex_count
    return csr_matrix((lengths[graph.slot_edge], graph.indices, graph.indptr), shape=(V, V))


def shortest_path_distance(graph, metric, i, j, hop=False):
    """Shortest-path length with edge lengths ``sqrt(g_e)``.

    Returns ``math.inf`` for vertices in different components.
    """
    if i == j:
        return 0.0
    d = dijkstra(_csr_lengths(graph, metric, hop), directed=False, indices=int(i))
    return float(d[int(j)])


def distances_from(graph, metric, sources, hop=False):
    """Dense distance rows from each source (small graphs only)."""
    return dijkstra(_csr_lengths(graph, metric, hop), directed=False, indices=np.asarray(sources, dtype=np.int64))


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def read_graph(path, beta_w=None, g_floor=DEFAULT_G_FLOOR):
    """Parse a graph file; returns ``(graph, metric)``."""
    path = Path(path)
    header = None
    verts = {}
    edges, gvals = [], []
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read graph file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "V":
                if header is not None or len(tok) != 4:
                    raise ValueError("bad header")
                header = (int(tok[1]), int(tok[2]), int(tok[3]))
            elif tok[0] == "v":
                if header is None:
                    raise ValueError("vertex before header")
                _, dim, _ = header
                if len(tok) != dim + 3:
                    raise ValueError(f"expected {dim} coordinates and theta")
                vid = int(tok[1])
                if vid in verts:
                    raise ValueError(f"vertex {vid} repeated")
                verts[vid] = [float(t) for t in tok[2:]]
            elif tok[0] == "e":
                if len(tok) not in (3, 4):
                    raise ValueError("edge needs 2 endpoints and optional g")
                edges.append((int(tok[1]), int(tok[2])))
                gvals.append(float(tok[3]) if len(tok) == 4 else math.nan)
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    if header is None:
        raise InvalidInputError(f"{path}: missing 'V' header")
    count, dim, n = header
    if sorted(verts) != list(range(count)):
        raise InvalidInputError(f"{path}: vertex ids must be exactly 0..{count - 1}")
    rows = np.array([verts[k] for k in range(count)], dtype=float).reshape(count, dim + 1)
    graph = ParameterGraph(rows[:, :dim], rows[:, dim], np.array(edges, dtype=np.int64).reshape(-1, 2), n)
    # edge order in the graph equals file order, so g values line up
    g = np.array(gvals, dtype=float)
    missing = np.isnan(g)
    if missing.any():
        bw = default_beta(n) if beta_w is None else beta_w
        g[missing] = init_weights(graph, bw, g_floor).g[missing]
    return graph, MetricState.build(graph, g, g_floor)


def write_graph(path, graph, metric=None):
    """Write a graph file; ``g`` values are included when a metric is given."""
    lines = [f"V {graph.vertex_count} {graph.dim} {graph.intrinsic_dim}"]
    for i in range(graph.vertex_count):
        vals = " ".join(repr(float(x)) for x in graph.coordinates[i])
        lines.append(f"v {i} {vals} {float(graph.theta[i])!r}")
    for k, (i, j) in enumerate(graph.edges):
        if metric is None:
            lines.append(f"e {i} {j}")
        else:
            lines.append(f"e {i} {j} {float(metric.g[k])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
