# cython: language_level=3
"""Compiled kernels for the quadratic-cost sample statistics.

Mirrors ``lapcap._kernels_py`` function for function.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()


cdef inline double _sqdist(const double[:, ::1] a, Py_ssize_t i,
                           const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t k
    cdef double d, acc = 0.0
    for k in range(a.shape[1]):
        d = a[i, k] - b[j, k]
        acc += d * d
    return acc


cdef double _block_sum(const double[:, ::1] a, const double[:, ::1] b, double scale, bint upper,
                       double* buf) noexcept nogil:
    # row-at-a-time: squared distances into a flat buffer, then one exp sweep
    cdef Py_ssize_t i, j, k, j0, w, d = a.shape[1]
    cdef double t, acc = 0.0
    for i in range(a.shape[0]):
        j0 = i + 1 if upper else 0
        w = b.shape[0] - j0
        for j in range(w):
            buf[j] = 0.0
        for k in range(d):
            t = a[i, k]
            for j in range(w):
                buf[j] += (t - b[j0 + j, k]) * (t - b[j0 + j, k])
        for j in range(w):
            acc += exp(scale * buf[j])
    return acc


def mmd2_unbiased(x, y, double bandwidth):
    """Unbiased squared MMD with a Gaussian kernel of the given bandwidth."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0], n = yv.shape[0]
    cdef double scale = -0.5 / (bandwidth * bandwidth)
    cdef double kxx, kyy, kxy
    if m < 2 or n < 2:
        raise ValueError("need at least two samples per side")
    cdef double[::1] buf = np.empty(max(m, n), dtype=np.float64)
    with nogil:
        kxx = _block_sum(xv, xv, scale, True, &buf[0])
        kyy = _block_sum(yv, yv, scale, True, &buf[0])
        kxy = _block_sum(xv, yv, scale, False, &buf[0])
    return 2.0 * kxx / (m * (m - 1.0)) + 2.0 * kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n)


def pairwise_distances(z):
    """Condensed Euclidean distances in ``scipy.spatial.distance.pdist`` order."""
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], i, j, p = 0
    out = np.empty(n * (n - 1) // 2, dtype=np.float64)
    cdef double[::1] ov = out
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                ov[p] = sqrt(_sqdist(zv, i, zv, j))
                p += 1
    return out
