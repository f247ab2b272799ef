# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops for the permutation engine.

Mirrors ``_kernels_py`` function for function; the two are checked against
each other in the test suite and timed in ``benchmarks/bench_kernels.py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, sqrt, lgamma, log1p, fabs, NAN, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double SERIES_EPS = 1e-16
cdef int MAX_ITER = 100000
cdef double TINY = 1e-300


cdef double _block_logdet(const double[:, ::1] mat, const cnp.int64_t[::1] members,
                          Py_ssize_t start, Py_ssize_t m, double* work) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s, total = 0.0
    for i in range(m):
        for j in range(i + 1):
            work[i * m + j] = mat[members[start + i], members[start + j]]
    for j in range(m):
        s = work[j * m + j]
        for k in range(j):
            s -= work[j * m + k] * work[j * m + k]
        if not (s > 0.0):
            return NAN
        s = sqrt(s)
        work[j * m + j] = s
        total += 2.0 * log(s)
        for i in range(j + 1, m):
            for k in range(j):
                work[i * m + j] -= work[i * m + k] * work[j * m + k]
            work[i * m + j] /= s
    return total


def block_logdets(const double[:, ::1] mat, const cnp.int64_t[::1] members,
                  const cnp.int64_t[::1] offsets):
    """Log-determinants of the principal submatrices listed in CSR form.

    Set ``i`` uses rows/columns ``members[offsets[i]:offsets[i+1]]``. A block
    that is not positive definite yields NaN.
    """
    cdef Py_ssize_t nsets = offsets.shape[0] - 1
    cdef Py_ssize_t i, m, maxm = 1
    for i in range(nsets):
        m = offsets[i + 1] - offsets[i]
        if m > maxm:
            maxm = m
    out = np.empty(nsets, dtype=np.float64)
    cdef double[::1] res = out
    cdef double* work = <double*> malloc(maxm * maxm * sizeof(double))
    if work == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(nsets):
                m = offsets[i + 1] - offsets[i]
                if m == 0:
                    res[i] = 0.0
                else:
                    res[i] = _block_logdet(mat, members, offsets[i], m, work)
    finally:
        free(work)
    return out


def group_covariance(const double[:, ::1] x, const cnp.int64_t[::1] rows):
    """Maximum likelihood covariance (divisor ``len(rows)``) of the given rows."""
    cdef Py_ssize_t n = rows.shape[0], p = x.shape[1]
    cdef Py_ssize_t a, i, j
    cdef double inv = 1.0 / n
    out = np.zeros((p, p), dtype=np.float64)
    mean_arr = np.zeros(p, dtype=np.float64)
    cdef double[:, ::1] cov = out
    cdef double[::1] mean = mean_arr
    cdef double* d = <double*> malloc(p * sizeof(double))
    if d == NULL:
        raise MemoryError()
    try:
        with nogil:
            for a in range(n):
                for j in range(p):
                    mean[j] += x[rows[a], j]
            for j in range(p):
                mean[j] *= inv
            for a in range(n):
                for j in range(p):
                    d[j] = x[rows[a], j] - mean[j]
                for i in range(p):
                    for j in range(i + 1):
                        cov[i, j] += d[i] * d[j]
            for i in range(p):
                for j in range(i + 1):
                    cov[i, j] *= inv
                    cov[j, i] = cov[i, j]
    finally:
        free(d)
    return out


cdef double _gamma_logq(double a, double x) noexcept nogil:
    """log of the regularized upper incomplete gamma Q(a, x)."""
    cdef double ap, total, term, logpre, b, c, d, h, an, delta
    cdef int n
    if x <= 0.0:
        return 0.0
    logpre = -x + a * log(x) - lgamma(a)
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for n in range(MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if fabs(term) < fabs(total) * SERIES_EPS:
                break
        # P = exp(logpre) * total
        return log1p(-exp(logpre + log(total)))
    b = x + 1.0 - a
    c = 1.0 / TINY
    d = 1.0 / b
    h = d
    for n in range(1, MAX_ITER):
        an = -n * (n - a)
        b += 2.0
        d = an * d + b
        if fabs(d) < TINY:
            d = TINY
        c = b + an / c
        if fabs(c) < TINY:
            c = TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < SERIES_EPS:
            break
    return logpre + log(h)


def chisq_logsf(const double[::1] x, const cnp.int64_t[::1] df):
    """Elementwise log upper-tail probability of chi-square(df) at x."""
    cdef Py_ssize_t i, n = x.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(n):
            res[i] = _gamma_logq(0.5 * df[i], 0.5 * x[i])
    return out
