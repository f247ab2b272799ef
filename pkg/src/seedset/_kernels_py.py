"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import math

import numpy as np

_SERIES_EPS = 1e-16
_MAX_ITER = 100000
_TINY = 1e-300


def block_logdets(mat, members, offsets):
    mat = np.asarray(mat, dtype=np.float64)
    out = np.empty(len(offsets) - 1, dtype=np.float64)
    for i in range(len(offsets) - 1):
        idx = members[offsets[i]:offsets[i + 1]]
        if len(idx) == 0:
            out[i] = 0.0
            continue
        try:
            chol = np.linalg.cholesky(mat[np.ix_(idx, idx)])
        except np.linalg.LinAlgError:
            out[i] = np.nan
            continue
        out[i] = 2.0 * np.log(np.diag(chol)).sum()
    return out


def group_covariance(x, rows):
    sub = np.asarray(x, dtype=np.float64)[rows]
    centered = sub - sub.mean(axis=0)
    return centered.T @ centered / len(rows)


def _gamma_logq(a, x):
    if x <= 0.0:
        return 0.0
    logpre = -x + a * math.log(x) - math.lgamma(a)
    if x < a + 1.0:
        ap = a
        term = total = 1.0 / a
        for _ in range(_MAX_ITER):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * _SERIES_EPS:
                break
        return math.log1p(-math.exp(logpre + math.log(total)))
    # modified Lentz continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for n in range(1, _MAX_ITER):
        an = -n * (n - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _SERIES_EPS:
            break
    return logpre + math.log(h)


def chisq_logsf(x, df):
    return np.array([_gamma_logq(0.5 * d, 0.5 * v) for v, d in zip(x, df)], dtype=np.float64)
