# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled loops for the two-sided geometric convolutions.

Every routine mirrors a function of the same name in ``_kernels_py``; the
selector in ``kernels`` decides which one the rest of the package sees.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


cdef inline void _conv_row(const double* src, double* out, Py_ssize_t n,
                           double rho_r, double rho_l) noexcept nogil:
    # out[y] = sum_x src[x] * (rho_r^(y-x) if y >= x else rho_l^(x-y))
    cdef Py_ssize_t y
    cdef double acc = 0.0
    for y in range(n):
        acc = rho_r * acc + src[y]
        out[y] = acc
    acc = 0.0
    for y in range(n - 1, -1, -1):
        acc = rho_l * acc + src[y]
        out[y] += acc - src[y]


def geom_conv(double[:, ::1] src, double rho_r, double rho_l, double[:, ::1] out):
    """Row-wise two-sided geometric convolution (unnormalised)."""
    cdef Py_ssize_t j, rows = src.shape[0], n = src.shape[1]
    if rows == 0 or n == 0:
        return
    with nogil:
        for j in range(rows):
            _conv_row(&src[j, 0], &out[j, 0], n, rho_r, rho_l)


def area_layer(double[:, ::1] prev, double[:, ::1] new, double[::1] ret,
               double r, double inv_c, Py_ssize_t X, Py_ssize_t a_hi, bint positive):
    """One step of the (position, area) recursion.

    ``prev[b, x + X]`` holds the weight of prefixes at position x with area b.
    Writes ``new[b + |y|, y + X] = inv_c * sum_x prev[b, x + X] r^{|y - x|}``
    for b + |y| <= a_hi (only y >= 1 when ``positive``), stores the value
    that would land on y = 0 in ``ret[b]`` and returns the mass pushed beyond
    |y| > X that would still have fitted in the area budget, i.e. the
    truncation loss of the position cap.
    """
    cdef Py_ssize_t W = 2 * X + 1
    cdef Py_ssize_t b, y, lim, lo, n, ay, A = new.shape[0]
    cdef double tail = 0.0, geo
    cdef double[::1] row = np.empty(W, dtype=np.float64)
    cdef double s
    cdef Py_ssize_t m
    with nogil:
        for b in range(A):
            for y in range(W):
                new[b, y] = 0.0
        for b in range(a_hi + 1):
            ret[b] = 0.0
            # source support is |x| <= min(b, X); targets need |y| <= a_hi - b
            lim = b if b > a_hi - b else a_hi - b
            if lim > X:
                lim = X
            lo = X - lim
            n = 2 * lim + 1
            s = 0.0
            for y in range(lo, lo + n):
                s += fabs(prev[b, y])
            if s == 0.0:
                continue
            _conv_row(&prev[b, lo], &row[lo], n, r, r)
            ret[b] = inv_c * row[X]
            if lim == X and a_hi - b > X:
                # mass sent past the cap that would still fit in the area budget:
                # the right recursion at y = X is row[W-1], the left one at -X is row[0]
                m = a_hi - b - X
                geo = r * (1.0 - pow(r, <double>m)) / (1.0 - r)
                if positive:
                    tail += inv_c * geo * row[W - 1]
                else:
                    tail += inv_c * geo * (row[W - 1] + row[0])
            for y in range(lo, lo + n):
                ay = y - X
                if ay < 0:
                    if positive:
                        continue
                    ay = -ay
                elif ay == 0 and positive:
                    continue
                if b + ay <= a_hi:
                    new[b + ay, y] = inv_c * row[y]
    return tail


def skew_shift(double[:, ::1] T, double[:, ::1] out, Py_ssize_t v0):
    """out[s + v, col] = T[s, col] with v = v0 + col; mass leaving the rows is dropped."""
    cdef Py_ssize_t S = T.shape[0], W = T.shape[1]
    cdef Py_ssize_t s, col, t, v
    with nogil:
        for s in range(S):
            for col in range(W):
                out[s, col] = 0.0
        for s in range(S):
            for col in range(W):
                v = v0 + col
                t = s + v
                if 0 <= t < S:
                    out[t, col] = T[s, col]
