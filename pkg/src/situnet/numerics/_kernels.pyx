# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels for the propagation step.

Every function mirrors one in ``_kernels_py`` and must produce the same
values (same operation order, no fast-math).
"""

from libc.math cimport sqrt

ctypedef fused real:
    float
    double


def gru_combine(const real[:, ::1] z, const real[:, ::1] h, const real[:, ::1] c,
                real[:, ::1] out):
    cdef Py_ssize_t i, j, n = z.shape[0], m = z.shape[1]
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = (1 - z[i, j]) * h[i, j] + z[i, j] * c[i, j]


def gru_combine_backward(const real[:, ::1] g, const real[:, ::1] z, const real[:, ::1] h,
                         const real[:, ::1] c, real[:, ::1] dz, real[:, ::1] dh,
                         real[:, ::1] dc):
    cdef Py_ssize_t i, j, n = z.shape[0], m = z.shape[1]
    with nogil:
        for i in range(n):
            for j in range(m):
                dz[i, j] = g[i, j] * (c[i, j] - h[i, j])
                dh[i, j] = g[i, j] * (1 - z[i, j])
                dc[i, j] = g[i, j] * z[i, j]


def aggregate(const real[:, :, ::1] msgs, const real[:, :, ::1] adj, real[:, :, ::1] out):
    """out[b, dst] = sum over src (ascending) of adj[b, dst, src] * msgs[b, src]."""
    cdef Py_ssize_t b, dst, src, k
    cdef Py_ssize_t nb = msgs.shape[0], ns = msgs.shape[1], d = msgs.shape[2]
    cdef real w
    with nogil:
        for b in range(nb):
            for dst in range(ns):
                for k in range(d):
                    out[b, dst, k] = 0
                for src in range(ns):
                    w = adj[b, dst, src]
                    if w != 0:
                        for k in range(d):
                            out[b, dst, k] = out[b, dst, k] + w * msgs[b, src, k]


def aggregate_backward(const real[:, :, ::1] g, const real[:, :, ::1] adj, real[:, :, ::1] out):
    cdef Py_ssize_t b, dst, src, k
    cdef Py_ssize_t nb = g.shape[0], ns = g.shape[1], d = g.shape[2]
    cdef real w
    with nogil:
        for b in range(nb):
            for src in range(ns):
                for k in range(d):
                    out[b, src, k] = 0
                for dst in range(ns):
                    w = adj[b, dst, src]
                    if w != 0:
                        for k in range(d):
                            out[b, src, k] = out[b, src, k] + w * g[b, dst, k]


def normalize_rows(const real[:, ::1] v, double eps, real[:, ::1] out, real[::1] norms):
    cdef Py_ssize_t i, j, n = v.shape[0], m = v.shape[1]
    cdef double acc
    cdef real den
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(m):
                acc = acc + v[i, j] * v[i, j]
            norms[i] = <real>sqrt(acc)
            den = norms[i] if norms[i] > eps else <real>eps
            for j in range(m):
                out[i, j] = v[i, j] / den


def normalize_rows_backward(const real[:, ::1] g, const real[:, ::1] out, const real[::1] norms,
                            double eps, real[:, ::1] dv):
    cdef Py_ssize_t i, j, n = g.shape[0], m = g.shape[1]
    cdef double dot
    cdef real den
    with nogil:
        for i in range(n):
            if norms[i] > eps:
                den = norms[i]
                dot = 0
                for j in range(m):
                    dot = dot + g[i, j] * out[i, j]
                for j in range(m):
                    dv[i, j] = (g[i, j] - <real>dot * out[i, j]) / den
            else:
                for j in range(m):
                    dv[i, j] = g[i, j] / <real>eps
