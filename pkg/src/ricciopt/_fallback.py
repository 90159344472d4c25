"""Pure-Python/numpy versions of the hot kernels.

Same algorithms and call signatures as the compiled ``_kernels`` module;
used when the extension is unavailable or ``RICCIOPT_BACKEND=python``.
"""
import heapq
import math

import numpy as np

# status codes shared with the compiled kernels
CONVERGED = 0
MAX_ITER = 1

_NEWTON_BACKTRACK = 12
_RESCUE_SWEEPS = 10


def _lse_rows(X):
    m = X.max(axis=1)
    return m + np.log(np.exp(X - m[:, None]).sum(axis=1))


def _g_update(f, C, lb, b, eps):
    X = (f[:, None] - C) / eps
    mx = X.max(axis=0)
    E = np.exp(X - mx[None, :])
    S = E.sum(axis=0)
    g = eps * (lb - mx - np.log(S))
    P = E * (b / S)[None, :]
    return g, P


def _violation(P, a):
    return float(np.abs(P.sum(axis=1) - a).sum())


def solve_entropic(a, b, C, eps, max_iter, tol, sk_iters):
    """Entropic OT between ``a`` and ``b``; returns ``(cost, iterations, violation, status)``.

    Log-domain Sinkhorn sweeps first; if the row marginals are still off
    after ``sk_iters`` sweeps, Newton steps on the row potentials take over.
    The column update is exact after every step, so the reported violation
    is the L1 row-marginal error.
    """
    m, n = C.shape
    if m == 1 or n == 1:
        return float(np.sum(a[:, None] * b[None, :] * C)), 0, 0.0, CONVERGED
    cmax = C.max()
    if cmax <= 0.0:
        return 0.0, 0, 0.0, CONVERGED
    la, lb = np.log(a), np.log(b)
    f = np.zeros(m)
    g = np.zeros(n)
    it = 0
    viol = math.inf
    P = None
    while it < max_iter:
        it += 1
        f = eps * (la - _lse_rows((g[None, :] - C) / eps))
        g, P = _g_update(f, C, lb, b, eps)
        viol = _violation(P, a)
        if viol < tol:
            return float((P * C).sum()), it, viol, CONVERGED
        if it >= sk_iters:
            break
    while viol >= tol and it < max_iter:
        it += 1
        d = _newton_direction(P, a, b, eps)
        accepted = False
        if d is not None:
            dmax = np.abs(d).max()
            if dmax > cmax:
                d *= cmax / dmax
            t = 1.0
            for _ in range(_NEWTON_BACKTRACK):
                fn = f + t * d
                gn, Pn = _g_update(fn, C, lb, b, eps)
                vn = _violation(Pn, a)
                if math.isfinite(vn) and vn < viol:
                    f, g, P, viol = fn, gn, Pn, vn
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            for _ in range(_RESCUE_SWEEPS):
                f = eps * (la - _lse_rows((g[None, :] - C) / eps))
                g, P = _g_update(f, C, lb, b, eps)
            viol = _violation(P, a)
    status = CONVERGED if viol < tol else MAX_ITER
    return float((P * C).sum()), it, viol, status


def _newton_direction(P, a, b, eps):
    """Newton step for the row potentials with the first row grounded.

    The reduced Hessian is a weighted graph Laplacian on rows; its diagonal
    is summed from the off-diagonal weights so tiny couplings survive.
    """
    m = P.shape[0]
    W = (P / b[None, :]) @ P.T
    np.fill_diagonal(W, 0.0)
    L = -W[1:, 1:]
    diag = W[1:, :].sum(axis=1)
    A = L / eps
    A[np.diag_indices(m - 1)] = diag / eps
    damp = 1e-13 * np.trace(A) / (m - 1) + 1e-300
    A[np.diag_indices(m - 1)] += damp
    rhs = (a - P.sum(axis=1))[1:]
    try:
        Lc = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    y = _forward(Lc, rhs)
    x = _backward(Lc, y)
    if not np.all(np.isfinite(x)):
        return None
    d = np.zeros(m)
    d[1:] = x
    return d


def _forward(L, b):
    y = np.empty_like(b)
    for i in range(b.size):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(L, y):
    x = np.empty_like(y)
    for i in range(y.size - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def sinkhorn_batch(mass, mptr, rows, cols, C, coff, eps_rel, eps_abs, max_iter, tol, sk_iters):
    """Solve many small problems; problem ``p`` transports measure ``rows[p]`` to ``cols[p]``.

    Measures live in ``mass[mptr[k]:mptr[k+1]]``; the cost of problem ``p``
    is ``C[coff[p]:coff[p+1]]`` in row-major order.  Epsilon is ``eps_abs``
    when positive, else ``eps_rel * max(cost)``.
    """
    P = len(rows)
    values = np.empty(P)
    iters = np.empty(P, dtype=np.int32)
    viol = np.empty(P)
    status = np.empty(P, dtype=np.int32)
    for p in range(P):
        r, c = rows[p], cols[p]
        a = mass[mptr[r]:mptr[r + 1]]
        b = mass[mptr[c]:mptr[c + 1]]
        Cp = C[coff[p]:coff[p + 1]].reshape(a.size, b.size)
        eps = eps_abs if eps_abs > 0 else eps_rel * (Cp.max() if Cp.size else 0.0)
        values[p], iters[p], viol[p], status[p] = solve_entropic(a, b, Cp, eps, max_iter, tol, sk_iters)
    return values, iters, viol, status


def _radius(graph_indptr, indices, slot_len, V):
    m1 = np.zeros(V)
    deg = np.diff(graph_indptr)
    nz = deg > 0
    if slot_len.size:
        m1[nz] = np.maximum.reduceat(slot_len, graph_indptr[:-1][nz])
    src = np.repeat(np.arange(V), deg)

    def spread(x):
        out = x.copy()
        np.maximum.at(out, src, x[indices])
        return out

    m2 = spread(m1)
    m3 = spread(m2)
    return m1 + m2 + m3


def build_edge_problems(indptr, indices, slot_edge, rev, edges, slot_len, with_self):
    """Cost matrices between neighbouring measures for every edge.

    For edge ``(u, v)`` with ``u < v`` the rows follow the support of
    ``u`` and the columns the support of ``v`` (see ``measure_arrays``).
    Distances come from one Dijkstra per vertex, truncated at a radius that
    covers every 3-hop walk, so the needed entries are exact.

    Returns ``(C, coff, d_uv)``.
    """
    V = len(indptr) - 1
    M = len(edges)
    deg = np.diff(indptr)
    sz = np.where(deg > 0, deg + (1 if with_self else 0), 0)
    eu, ev = edges[:, 0], edges[:, 1]
    coff = np.zeros(M + 1, dtype=np.int64)
    np.cumsum(sz[eu] * sz[ev], out=coff[1:])
    C = np.empty(coff[-1])
    d_uv = np.empty(M)
    radius = _radius(indptr, indices, slot_len, V)
    off = 1 if with_self else 0
    for a in range(V):
        if deg[a] == 0:
            continue
        dist = _bounded_dijkstra(a, radius[a], indptr, indices, slot_len)
        # (i, position of a in supp(i))
        targets = [(a, 0 if with_self else -1)]
        for s in range(indptr[a], indptr[a + 1]):
            i = indices[s]
            targets.append((i, rev[s] - indptr[i] + off))
        for i, pos in targets:
            for t in range(indptr[i], indptr[i + 1]):
                j = indices[t]
                if j <= i:
                    continue
                e = slot_edge[t]
                if i == a:
                    d_uv[e] = dist[j]
                if pos < 0:
                    continue
                base = coff[e] + pos * sz[j]
                col = 0
                if with_self:
                    C[base] = dist[j]
                    col = 1
                for q in range(indptr[j], indptr[j + 1]):
                    C[base + col] = dist[indices[q]]
                    col += 1
    return C, coff, d_uv


def _bounded_dijkstra(src, radius, indptr, indices, slot_len):
    dist = {src: 0.0}
    done = set()
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for s in range(indptr[u], indptr[u + 1]):
            v = indices[s]
            nd = d + slot_len[s]
            if nd <= radius and nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist
