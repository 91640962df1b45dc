"""Pure-numpy implementations of the hot kernels.

Functionally equivalent to the compiled `_kernels` extension; selected at
import time when the extension is unavailable (or when forced through the
``TSCALIB_BACKEND`` environment variable).
"""

import numpy as np
from scipy.special import betaln

name = "numpy"

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def beta_logpdf(x, a, b):
    """Log density of Beta(a, b) at each point; -inf outside (0, 1)."""
    x = _as_f64(x)
    out = np.full(x.shape, -np.inf)
    inside = (x > 0.0) & (x < 1.0)
    xi = x[inside]
    out[inside] = (a - 1.0) * np.log(xi) + (b - 1.0) * np.log1p(-xi) - betaln(a, b)
    return out


def gauss_logpdf(x, mean, var):
    """Log density of N(mean, var) at each point (var > 0)."""
    x = _as_f64(x)
    return -0.5 * ((x - mean) ** 2 / var) - 0.5 * (_LOG_2PI + np.log(var))


def _safe_log(w):
    return np.log(w) if w > 0.0 else -np.inf


def _estep(l0, l1):
    m = np.maximum(l0, l1)
    dead = ~np.isfinite(m)
    m_safe = np.where(dead, 0.0, m)
    e0 = np.exp(l0 - m_safe)
    e1 = np.exp(l1 - m_safe)
    s = e0 + e1
    r0 = np.where(dead, 0.5, e0 / np.where(s == 0.0, 1.0, s))
    ll_terms = np.where(dead, -np.inf, m_safe + np.log(np.where(s == 0.0, 1.0, s)))
    return r0, float(ll_terms.sum())


def beta_estep(x, w0, a0, b0, w1, a1, b1):
    """Clean-component responsibilities and observed log-likelihood for a
    two-component Beta mixture. Points where both densities vanish get 0.5."""
    x = _as_f64(x)
    l0 = _safe_log(w0) + beta_logpdf(x, a0, b0)
    l1 = _safe_log(w1) + beta_logpdf(x, a1, b1)
    return _estep(l0, l1)


def gauss_estep(x, w0, m0, v0, w1, m1, v1):
    """Same as :func:`beta_estep` for a two-component Gaussian mixture."""
    x = _as_f64(x)
    l0 = _safe_log(w0) + gauss_logpdf(x, m0, v0)
    l1 = _safe_log(w1) + gauss_logpdf(x, m1, v1)
    return _estep(l0, l1)


def weighted_mean_var(x, w):
    """Weighted mean and (population) variance; (nan, nan) when weights sum to 0."""
    x = _as_f64(x)
    w = _as_f64(w)
    sw = float(w.sum())
    if sw <= 0.0:
        return float("nan"), float("nan")
    m = float((w * x).sum() / sw)
    v = float((w * (x - m) ** 2).sum() / sw)
    return m, v


def linear_resample(x, times):
    """Resample a (T, F) series at fractional time positions ``times``.

    Positions are clamped to [0, T-1]; values interpolate linearly between
    neighbouring timesteps, independently per feature channel.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    times = _as_f64(times)
    length = x.shape[0]
    grid = np.arange(length, dtype=np.float64)
    cols = [np.interp(times, grid, x[:, f]) for f in range(x.shape[1])]
    return np.stack(cols, axis=1)
