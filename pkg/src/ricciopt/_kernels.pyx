# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_fallback``.

Same algorithms, same signatures.  Everything below runs without the GIL.
"""
import numpy as np

from libc.math cimport exp, log, fabs, INFINITY, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy

DEF NEWTON_BACKTRACK = 12
DEF RESCUE_SWEEPS = 10


cdef struct Work:
    double* la
    double* lb
    double* f
    double* g
    double* fn
    double* gn
    double* E
    double* P
    double* Pn
    double* S
    double* mx
    double* d
    double* A
    double* rhs
    double* W


cdef void _work_alloc(Work* w, Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    w.la = <double*> malloc(m * sizeof(double))
    w.lb = <double*> malloc(n * sizeof(double))
    w.f = <double*> malloc(m * sizeof(double))
    w.g = <double*> malloc(n * sizeof(double))
    w.fn = <double*> malloc(m * sizeof(double))
    w.gn = <double*> malloc(n * sizeof(double))
    w.E = <double*> malloc(m * n * sizeof(double))
    w.P = <double*> malloc(m * n * sizeof(double))
    w.Pn = <double*> malloc(m * n * sizeof(double))
    w.S = <double*> malloc(n * sizeof(double))
    w.mx = <double*> malloc(n * sizeof(double))
    w.d = <double*> malloc(m * sizeof(double))
    w.A = <double*> malloc(m * m * sizeof(double))
    w.rhs = <double*> malloc(m * sizeof(double))
    w.W = <double*> malloc(m * m * sizeof(double))


cdef void _work_free(Work* w) noexcept nogil:
    free(w.la); free(w.lb); free(w.f); free(w.g); free(w.fn); free(w.gn)
    free(w.E); free(w.P); free(w.Pn); free(w.S); free(w.mx); free(w.d)
    free(w.A); free(w.rhs); free(w.W)


cdef void _f_update(double* f, const double* g, const double* C, const double* la,
                    Py_ssize_t m, Py_ssize_t n, double eps) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double mx, s, x
    for i in range(m):
        mx = -INFINITY
        for j in range(n):
            x = (g[j] - C[i * n + j]) / eps
            if x > mx:
                mx = x
        s = 0.0
        for j in range(n):
            s += exp((g[j] - C[i * n + j]) / eps - mx)
        f[i] = eps * (la[i] - mx - log(s))


cdef double _g_update(const double* f, double* g, double* P, Work* w, const double* C,
                      const double* a, const double* b, Py_ssize_t m, Py_ssize_t n,
                      double eps) noexcept nogil:
    """Exact column update; fills P and returns the L1 row violation."""
    cdef Py_ssize_t i, j
    cdef double x, mx, s, r, viol
    for j in range(n):
        mx = -INFINITY
        for i in range(m):
            x = (f[i] - C[i * n + j]) / eps
            if x > mx:
                mx = x
        w.mx[j] = mx
    for j in range(n):
        w.S[j] = 0.0
    for i in range(m):
        for j in range(n):
            x = exp((f[i] - C[i * n + j]) / eps - w.mx[j])
            w.E[i * n + j] = x
            w.S[j] += x
    for j in range(n):
        g[j] = eps * (w.lb[j] - w.mx[j] - log(w.S[j]))
    viol = 0.0
    for i in range(m):
        r = 0.0
        for j in range(n):
            x = w.E[i * n + j] * (b[j] / w.S[j])
            P[i * n + j] = x
            r += x
        viol += fabs(r - a[i])
    return viol


cdef bint _newton_direction(Work* w, const double* a, const double* b,
                            Py_ssize_t m, Py_ssize_t n, double eps) noexcept nogil:
    cdef Py_ssize_t i, k, j, q
    cdef Py_ssize_t r = m - 1
    cdef double s, tr, damp, x
    for i in range(m):
        for k in range(m):
            w.W[i * m + k] = 0.0
    for i in range(m):
        for k in range(i + 1, m):
            s = 0.0
            for j in range(n):
                s += w.P[i * n + j] * w.P[k * n + j] / b[j]
            w.W[i * m + k] = s
            w.W[k * m + i] = s
    tr = 0.0
    for i in range(r):
        s = 0.0
        for k in range(m):
            if k != i + 1:
                s += w.W[(i + 1) * m + k]
        for k in range(r):
            w.A[i * r + k] = -w.W[(i + 1) * m + (k + 1)] / eps
        w.A[i * r + i] = s / eps
        tr += s / eps
        x = 0.0
        for j in range(n):
            x += w.P[(i + 1) * n + j]
        w.rhs[i] = a[i + 1] - x
    damp = 1e-13 * tr / r + 1e-300
    for i in range(r):
        w.A[i * r + i] += damp
    # in-place Cholesky, lower triangle
    for j in range(r):
        s = w.A[j * r + j]
        for k in range(j):
            s -= w.A[j * r + k] * w.A[j * r + k]
        if not (s > 0.0):
            return False
        s = s ** 0.5
        w.A[j * r + j] = s
        for i in range(j + 1, r):
            x = w.A[i * r + j]
            for k in range(j):
                x -= w.A[i * r + k] * w.A[j * r + k]
            w.A[i * r + j] = x / s
    for i in range(r):
        x = w.rhs[i]
        for k in range(i):
            x -= w.A[i * r + k] * w.rhs[k]
        w.rhs[i] = x / w.A[i * r + i]
    for q in range(r):
        i = r - 1 - q
        x = w.rhs[i]
        for k in range(i + 1, r):
            x -= w.A[k * r + i] * w.rhs[k]
        w.rhs[i] = x / w.A[i * r + i]
    w.d[0] = 0.0
    for i in range(r):
        if not isfinite(w.rhs[i]):
            return False
        w.d[i + 1] = w.rhs[i]
    return True


cdef int _solve(const double* a, const double* b, const double* C, Py_ssize_t m, Py_ssize_t n,
                double eps, int max_iter, double tol, int sk_iters, Work* w,
                double* out_value, int* out_iters, double* out_viol) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double cmax = 0.0, viol = INFINITY, vn, dmax, t, val
    cdef int it = 0, rescue
    cdef bint accepted
    cdef double* tmp
    if m == 1 or n == 1:
        val = 0.0
        for i in range(m):
            for j in range(n):
                val += a[i] * b[j] * C[i * n + j]
        out_value[0] = val
        out_iters[0] = 0
        out_viol[0] = 0.0
        return 0
    for i in range(m * n):
        if C[i] > cmax:
            cmax = C[i]
    if cmax <= 0.0:
        out_value[0] = 0.0
        out_iters[0] = 0
        out_viol[0] = 0.0
        return 0
    for i in range(m):
        w.la[i] = log(a[i])
        w.f[i] = 0.0
    for j in range(n):
        w.lb[j] = log(b[j])
        w.g[j] = 0.0
    while it < max_iter:
        it += 1
        _f_update(w.f, w.g, C, w.la, m, n, eps)
        viol = _g_update(w.f, w.g, w.P, w, C, a, b, m, n, eps)
        if viol < tol or it >= sk_iters:
            break
    while viol >= tol and it < max_iter:
        it += 1
        accepted = False
        if _newton_direction(w, a, b, m, n, eps):
            dmax = 0.0
            for i in range(m):
                if fabs(w.d[i]) > dmax:
                    dmax = fabs(w.d[i])
            if dmax > cmax:
                for i in range(m):
                    w.d[i] *= cmax / dmax
            t = 1.0
            for k in range(NEWTON_BACKTRACK):
                for i in range(m):
                    w.fn[i] = w.f[i] + t * w.d[i]
                vn = _g_update(w.fn, w.gn, w.Pn, w, C, a, b, m, n, eps)
                if isfinite(vn) and vn < viol:
                    tmp = w.f; w.f = w.fn; w.fn = tmp
                    tmp = w.g; w.g = w.gn; w.gn = tmp
                    tmp = w.P; w.P = w.Pn; w.Pn = tmp
                    viol = vn
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            for rescue in range(RESCUE_SWEEPS):
                _f_update(w.f, w.g, C, w.la, m, n, eps)
                viol = _g_update(w.f, w.g, w.P, w, C, a, b, m, n, eps)
    val = 0.0
    for i in range(m * n):
        val += w.P[i] * C[i]
    out_value[0] = val
    out_iters[0] = it
    out_viol[0] = viol
    return 0 if viol < tol else 1


def sinkhorn_batch(const double[::1] mass, const long[::1] mptr, const long[::1] rows,
                   const long[::1] cols, const double[::1] C, const long[::1] coff,
                   double eps_rel, double eps_abs, int max_iter, double tol, int sk_iters):
    cdef Py_ssize_t P = rows.shape[0]
    cdef Py_ssize_t p, k, m, n, mmax = 1, nmax = 1, r, c
    values_np = np.empty(P, dtype=np.float64)
    iters_np = np.empty(P, dtype=np.int32)
    viol_np = np.empty(P, dtype=np.float64)
    status_np = np.empty(P, dtype=np.int32)
    cdef double[::1] values = values_np
    cdef int[::1] iters = iters_np
    cdef double[::1] viol = viol_np
    cdef int[::1] status = status_np
    cdef double eps, cm
    cdef Work w
    for k in range(mptr.shape[0] - 1):
        m = mptr[k + 1] - mptr[k]
        if m > mmax:
            mmax = m
    nmax = mmax
    with nogil:
        _work_alloc(&w, mmax, nmax)
        for p in range(P):
            r = rows[p]
            c = cols[p]
            m = mptr[r + 1] - mptr[r]
            n = mptr[c + 1] - mptr[c]
            if eps_abs > 0:
                eps = eps_abs
            else:
                cm = 0.0
                for k in range(coff[p], coff[p + 1]):
                    if C[k] > cm:
                        cm = C[k]
                eps = eps_rel * cm
            status[p] = _solve(&mass[mptr[r]], &mass[mptr[c]], &C[coff[p]], m, n, eps,
                               max_iter, tol, sk_iters, &w, &values[p], &iters[p], &viol[p])
        _work_free(&w)
    return values_np, iters_np, viol_np, status_np


# ---------------------------------------------------------------------------
# cost assembly
# ---------------------------------------------------------------------------

cdef inline void _heap_push(double* hk, long* hv, Py_ssize_t* size, double key, long v) noexcept nogil:
    cdef Py_ssize_t i = size[0], parent
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if hk[parent] <= key:
            break
        hk[i] = hk[parent]
        hv[i] = hv[parent]
        i = parent
    hk[i] = key
    hv[i] = v


cdef inline void _heap_pop(double* hk, long* hv, Py_ssize_t* size, double* key, long* v) noexcept nogil:
    cdef Py_ssize_t i = 0, child, n
    cdef double lk
    cdef long lv
    key[0] = hk[0]
    v[0] = hv[0]
    size[0] -= 1
    n = size[0]
    if n == 0:
        return
    lk = hk[n]
    lv = hv[n]
    while True:
        child = 2 * i + 1
        if child >= n:
            break
        if child + 1 < n and hk[child + 1] < hk[child]:
            child += 1
        if hk[child] >= lk:
            break
        hk[i] = hk[child]
        hv[i] = hv[child]
        i = child
    hk[i] = lk
    hv[i] = lv


def build_edge_problems(const long[::1] indptr, const long[::1] indices, const long[::1] slot_edge,
                        const long[::1] rev, const long[:, ::1] edges, const double[::1] slot_len,
                        bint with_self):
    cdef Py_ssize_t V = indptr.shape[0] - 1
    cdef Py_ssize_t M = edges.shape[0]
    cdef Py_ssize_t nnz = indices.shape[0]
    cdef Py_ssize_t a, s, t, q, i, j, e, u, k, base, col, hsize, ntouched
    cdef long off = 1 if with_self else 0
    cdef long pos, v
    cdef double d, nd, rad

    deg_np = np.diff(np.asarray(indptr))
    sz_np = np.where(deg_np > 0, deg_np + off, 0).astype(np.int64)
    eu = np.asarray(edges[:, 0])
    ev = np.asarray(edges[:, 1])
    coff_np = np.zeros(M + 1, dtype=np.int64)
    np.cumsum(sz_np[eu] * sz_np[ev], out=coff_np[1:])
    C_np = np.empty(coff_np[-1], dtype=np.float64)
    duv_np = np.empty(M, dtype=np.float64)

    # radius covering every walk of at most 3 hops
    m1_np = np.zeros(V)
    nz = deg_np > 0
    if nnz:
        m1_np[nz] = np.maximum.reduceat(np.asarray(slot_len), np.asarray(indptr)[:-1][nz])
    src = np.repeat(np.arange(V), deg_np)
    m2_np = m1_np.copy()
    np.maximum.at(m2_np, src, m1_np[np.asarray(indices)])
    m3_np = m2_np.copy()
    np.maximum.at(m3_np, src, m2_np[np.asarray(indices)])
    radius_np = m1_np + m2_np + m3_np

    cdef long[::1] sz = sz_np
    cdef long[::1] coff = coff_np
    cdef double[::1] Cv = C_np
    cdef double[::1] duv = duv_np
    cdef double[::1] radius = radius_np

    cdef double* dist = <double*> malloc(max(V, 1) * sizeof(double))
    cdef char* done = <char*> malloc(max(V, 1) * sizeof(char))
    cdef long* touched = <long*> malloc(max(V, 1) * sizeof(long))
    cdef double* hk = <double*> malloc((nnz + 1) * sizeof(double))
    cdef long* hv = <long*> malloc((nnz + 1) * sizeof(long))
    cdef long* tgt_v = <long*> malloc((nnz + 1) * sizeof(long))
    cdef long* tgt_p = <long*> malloc((nnz + 1) * sizeof(long))
    cdef Py_ssize_t ntgt
    try:
        with nogil:
            for a in range(V):
                dist[a] = INFINITY
                done[a] = 0
            for a in range(V):
                if indptr[a + 1] == indptr[a]:
                    continue
                rad = radius[a]
                # bounded Dijkstra from a
                ntouched = 0
                hsize = 0
                dist[a] = 0.0
                touched[ntouched] = a
                ntouched += 1
                _heap_push(hk, hv, &hsize, 0.0, a)
                while hsize > 0:
                    _heap_pop(hk, hv, &hsize, &d, &v)
                    if done[v]:
                        continue
                    done[v] = 1
                    for s in range(indptr[v], indptr[v + 1]):
                        u = indices[s]
                        nd = d + slot_len[s]
                        if nd <= rad and nd < dist[u]:
                            if dist[u] == INFINITY:
                                touched[ntouched] = u
                                ntouched += 1
                            dist[u] = nd
                            _heap_push(hk, hv, &hsize, nd, u)
                # vertices i whose support contains a, with a's position there
                ntgt = 0
                tgt_v[ntgt] = a
                tgt_p[ntgt] = 0 if with_self else -1
                ntgt += 1
                for s in range(indptr[a], indptr[a + 1]):
                    i = indices[s]
                    tgt_v[ntgt] = i
                    tgt_p[ntgt] = rev[s] - indptr[i] + off
                    ntgt += 1
                for k in range(ntgt):
                    i = tgt_v[k]
                    pos = tgt_p[k]
                    for t in range(indptr[i], indptr[i + 1]):
                        j = indices[t]
                        if j <= i:
                            continue
                        e = slot_edge[t]
                        if i == a:
                            duv[e] = dist[j]
                        if pos < 0:
                            continue
                        base = coff[e] + pos * sz[j]
                        col = 0
                        if with_self:
                            Cv[base] = dist[j]
                            col = 1
                        for q in range(indptr[j], indptr[j + 1]):
                            Cv[base + col] = dist[indices[q]]
                            col += 1
                for k in range(ntouched):
                    dist[touched[k]] = INFINITY
                    done[touched[k]] = 0
    finally:
        free(dist); free(done); free(touched); free(hk); free(hv); free(tgt_v); free(tgt_p)
    return C_np, coff_np, duv_np
