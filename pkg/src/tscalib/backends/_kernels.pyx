# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: mixture E-steps, weighted moments, warp resampling.

Mirrors ``numpy_backend`` exactly (same formulas, same edge-case handling);
the two are interchangeable and covered by equivalence tests.
"""

from libc.math cimport INFINITY, exp, lgamma, log, log1p

import numpy as np

cimport numpy as cnp

cnp.import_array()

name = "cython"

cdef double LOG_2PI = 1.8378770664093453


cdef inline double _beta_logpdf_one(double x, double a, double b, double lnorm) nogil:
    if x <= 0.0 or x >= 1.0:
        return -INFINITY
    return (a - 1.0) * log(x) + (b - 1.0) * log1p(-x) - lnorm


cdef inline double _gauss_logpdf_one(double x, double mean, double var) nogil:
    cdef double d = x - mean
    return -0.5 * (d * d / var) - 0.5 * (LOG_2PI + log(var))


cdef inline double _safe_log(double w) nogil:
    if w > 0.0:
        return log(w)
    return -INFINITY


def beta_logpdf(x, double a, double b):
    """Log density of Beta(a, b) at each point; -inf outside (0, 1)."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double lnorm = lgamma(a) + lgamma(b) - lgamma(a + b)
    for i in range(n):
        ov[i] = _beta_logpdf_one(xv[i], a, b, lnorm)
    return out


def gauss_logpdf(x, double mean, double var):
    """Log density of N(mean, var) at each point (var > 0)."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = _gauss_logpdf_one(xv[i], mean, var)
    return out


cdef _estep_loop(double[::1] l0, double[::1] l1):
    cdef Py_ssize_t i, n = l0.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] r0 = out
    cdef double ll = 0.0
    cdef double m, e0, e1, s
    for i in range(n):
        if l0[i] == -INFINITY and l1[i] == -INFINITY:
            r0[i] = 0.5
            ll = -INFINITY
            continue
        m = l0[i] if l0[i] > l1[i] else l1[i]
        e0 = exp(l0[i] - m)
        e1 = exp(l1[i] - m)
        s = e0 + e1
        r0[i] = e0 / s
        ll += m + log(s)
    return out, ll


def beta_estep(x, double w0, double a0, double b0, double w1, double a1, double b1):
    """Clean-component responsibilities and observed log-likelihood for a
    two-component Beta mixture. Points where both densities vanish get 0.5."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    l0_arr = np.empty(n, dtype=np.float64)
    l1_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] l0 = l0_arr
    cdef double[::1] l1 = l1_arr
    cdef double lw0 = _safe_log(w0)
    cdef double lw1 = _safe_log(w1)
    cdef double ln0 = lgamma(a0) + lgamma(b0) - lgamma(a0 + b0)
    cdef double ln1 = lgamma(a1) + lgamma(b1) - lgamma(a1 + b1)
    for i in range(n):
        l0[i] = lw0 + _beta_logpdf_one(xv[i], a0, b0, ln0)
        l1[i] = lw1 + _beta_logpdf_one(xv[i], a1, b1, ln1)
    r0, ll = _estep_loop(l0, l1)
    return r0, float(ll)


def gauss_estep(x, double w0, double m0, double v0, double w1, double m1, double v1):
    """Same as :func:`beta_estep` for a two-component Gaussian mixture."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    l0_arr = np.empty(n, dtype=np.float64)
    l1_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] l0 = l0_arr
    cdef double[::1] l1 = l1_arr
    cdef double lw0 = _safe_log(w0)
    cdef double lw1 = _safe_log(w1)
    for i in range(n):
        l0[i] = lw0 + _gauss_logpdf_one(xv[i], m0, v0)
        l1[i] = lw1 + _gauss_logpdf_one(xv[i], m1, v1)
    r0, ll = _estep_loop(l0, l1)
    return r0, float(ll)


def weighted_mean_var(x, w):
    """Weighted mean and (population) variance; (nan, nan) when weights sum to 0."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double sw = 0.0, sx = 0.0, sv = 0.0, m, d
    for i in range(n):
        sw += wv[i]
        sx += wv[i] * xv[i]
    if sw <= 0.0:
        return float("nan"), float("nan")
    m = sx / sw
    for i in range(n):
        d = xv[i] - m
        sv += wv[i] * d * d
    return m, sv / sw


def linear_resample(x, times):
    """Resample a (T, F) series at fractional time positions ``times``.

    Positions are clamped to [0, T-1]; values interpolate linearly between
    neighbouring timesteps, independently per feature channel.
    """
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(times, dtype=np.float64)
    cdef Py_ssize_t i, f, j, n = tv.shape[0]
    cdef Py_ssize_t length = xv.shape[0], width = xv.shape[1]
    out = np.empty((n, width), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double ti, w
    for i in range(n):
        ti = tv[i]
        if ti <= 0.0:
            for f in range(width):
                ov[i, f] = xv[0, f]
        elif ti >= length - 1:
            for f in range(width):
                ov[i, f] = xv[length - 1, f]
        else:
            j = <Py_ssize_t> ti
            if j > length - 2:
                j = length - 2
            w = ti - j
            for f in range(width):
                ov[i, f] = xv[j, f] + w * (xv[j + 1, f] - xv[j, f])
    return out
