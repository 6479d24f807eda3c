# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors :mod:`varstop._pykernels` exactly."""

import numpy as np

from libc.math cimport INFINITY


def envelope_argmax(const double[::1] a, const double[::1] b, const double[::1] cs):
    """For every ``c`` in ``cs`` return ``max_j a[j] - c*b[j]`` and the greatest maximizing ``j``."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = cs.shape[0]
    cdef Py_ssize_t i, j, best_j
    cdef double c, v, best
    values = np.empty(m, dtype=np.float64)
    index = np.empty(m, dtype=np.intp)
    cdef double[::1] ov = values
    cdef Py_ssize_t[::1] oi = index
    for i in range(m):
        c = cs[i]
        best = -INFINITY
        best_j = -1
        for j in range(n):
            v = a[j] - c * b[j]
            if v >= best:
                best = v
                best_j = j
        ov[i] = best
        oi[i] = best_j
    return values, index


def upper_hull(const double[::1] xs, const double[::1] ys):
    """Indices of the upper concave hull of points sorted by strictly increasing ``xs``."""
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, top = 0
    cdef double cross
    stack = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] st = stack
    for i in range(n):
        while top >= 2:
            cross = ((xs[st[top - 1]] - xs[st[top - 2]]) * (ys[i] - ys[st[top - 2]])
                     - (ys[st[top - 1]] - ys[st[top - 2]]) * (xs[i] - xs[st[top - 2]]))
            if cross >= 0.0:
                top -= 1
            else:
                break
        st[top] = i
        top += 1
    return stack[:top].copy()


cdef inline double _mix_var(double p, double mi, double qi, double mj, double qj):
    cdef double m = p * mi + (1.0 - p) * mj
    return p * qi + (1.0 - p) * qj - m * m


def best_pair_variance(const double[::1] mean, const double[::1] second):
    """Largest variance of a Bernoulli mixture of two of the given laws.

    Returns ``(variance, i, j, p)`` where law ``i`` is taken with probability ``p``.
    """
    cdef Py_ssize_t n = mean.shape[0]
    cdef Py_ssize_t i, j, bi = 0, bj = 0
    cdef double best = -INFINITY, bp = 1.0, d, p, v
    for i in range(n):
        v = second[i] - mean[i] * mean[i]
        if v > best:
            best = v
            bi = i
            bj = i
            bp = 1.0
    for i in range(n):
        for j in range(i + 1, n):
            d = mean[i] - mean[j]
            if d == 0.0:
                continue
            p = ((second[i] - second[j]) / (2.0 * d) - mean[j]) / d
            if p <= 0.0 or p >= 1.0:
                continue
            v = _mix_var(p, mean[i], second[i], mean[j], second[j])
            if v > best:
                best = v
                bi = i
                bj = j
                bp = p
    return best, bi, bj, bp
