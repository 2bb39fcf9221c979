# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay call-compatible with _pykernels."""
import numpy as np

from libc.math cimport exp, log1p, fabs
from libc.stdint cimport uint64_t, int64_t

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


cdef inline uint64_t _fnv(const unsigned char[:] data) nogil:
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h ^= data[i]
        h *= FNV_PRIME
    return h


def fnv1a64(bytes data):
    if len(data) == 0:
        return int(FNV_OFFSET)
    return int(_fnv(data))


def fnv1a64_batch(items):
    return [fnv1a64(b) for b in items]


def assign_nearest(points, centroids):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0], d = P.shape[1], k = C.shape[0]
    codes_arr = np.empty(n, dtype=np.int64)
    best_arr = np.empty(n, dtype=np.float64)
    cdef int64_t[::1] codes = codes_arr
    cdef double[::1] best = best_arr
    cdef Py_ssize_t i, c, j, arg
    cdef double acc, diff, lo
    with nogil:
        for i in range(n):
            arg = 0
            lo = 0.0
            for c in range(k):
                acc = 0.0
                for j in range(d):
                    diff = P[i, j] - C[c, j]
                    acc = acc + diff * diff
                if c == 0 or acc < lo:
                    lo = acc
                    arg = c
            codes[i] = arg
            best[i] = lo
    return codes_arr, best_arr


cdef inline double _softplus(double x) nogil:
    return (x if x > 0 else 0.0) + log1p(exp(-fabs(x)))


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def sgd_epoch(double[:, ::1] user_table, double[:, ::1] item_table,
              const int64_t[::1] u_idx, const int64_t[::1] u_ptr,
              const int64_t[::1] i_idx, const int64_t[::1] i_ptr,
              const double[::1] labels, const double[::1] weights,
              const int64_t[::1] order, double lr):
    cdef Py_ssize_t dim = user_table.shape[1]
    cdef double[::1] u = np.empty(dim)
    cdef double[::1] v = np.empty(dim)
    cdef Py_ssize_t t, ex, a, b, j, nu, ni
    cdef double s, y, w, g, total = 0.0, su, sv
    with nogil:
        for t in range(order.shape[0]):
            ex = order[t]
            nu = u_ptr[ex + 1] - u_ptr[ex]
            ni = i_ptr[ex + 1] - i_ptr[ex]
            if nu == 0 or ni == 0:
                continue
            for j in range(dim):
                u[j] = 0.0
                v[j] = 0.0
            for a in range(u_ptr[ex], u_ptr[ex + 1]):
                for j in range(dim):
                    u[j] += user_table[u_idx[a], j]
            for b in range(i_ptr[ex], i_ptr[ex + 1]):
                for j in range(dim):
                    v[j] += item_table[i_idx[b], j]
            s = 0.0
            for j in range(dim):
                u[j] /= nu
                v[j] /= ni
                s += u[j] * v[j]
            y = labels[ex]
            w = weights[ex]
            if y > 0.5:
                total += w * _softplus(-s)
            else:
                total += w * _softplus(s)
            g = w * (_sigmoid(s) - y)
            if g == 0.0:
                continue
            su = lr * g / nu
            sv = lr * g / ni
            for a in range(u_ptr[ex], u_ptr[ex + 1]):
                for j in range(dim):
                    user_table[u_idx[a], j] -= su * v[j]
            for b in range(i_ptr[ex], i_ptr[ex + 1]):
                for j in range(dim):
                    item_table[i_idx[b], j] -= sv * u[j]
    return total
