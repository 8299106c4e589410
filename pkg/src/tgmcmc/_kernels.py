"""Numba kernels for the Gaussian-Wishart evidence.

Sufficient statistics are packed as ``v = [sum x, vec(sum x x^T)]`` over data
that were centred on the prior mean, so the prior mean is zero here.
"""
import math

import numpy as np
from numba import njit

LOG_PI = math.log(math.pi)


@njit(cache=True)
def _chol_inplace(a, d):
    # lower Cholesky factor written into a; returns log det or nan
    logdet = 0.0
    for j in range(d):
        s = a[j, j]
        for k in range(j):
            s -= a[j, k] * a[j, k]
        if s <= 0.0:
            return np.nan
        ljj = math.sqrt(s)
        a[j, j] = ljj
        logdet += 2.0 * math.log(ljj)
        for i in range(j + 1, d):
            t = a[i, j]
            for k in range(j):
                t -= a[i, k] * a[j, k]
            a[i, j] = t / ljj
    return logdet


@njit(cache=True)
def _post_scale(n, v, psi0, r0, d, out):
    rn = r0 + n
    for i in range(d):
        for j in range(d):
            out[i, j] = psi0[i, j] + v[d + i * d + j] - v[i] * v[j] / rn


@njit(cache=True)
def _lmvgamma(a, d):
    s = 0.25 * d * (d - 1) * LOG_PI
    for j in range(d):
        s += math.lgamma(a - 0.5 * j)
    return s


@njit(cache=True)
def gw_log_ml(n, v, psi0, logdet0, r0, nu0, d):
    if n == 0:
        return 0.0
    work = np.empty((d, d))
    _post_scale(n, v, psi0, r0, d, work)
    ld = _chol_inplace(work, d)
    nun = nu0 + n
    rn = r0 + n
    return (-0.5 * n * d * LOG_PI + _lmvgamma(0.5 * nun, d) - _lmvgamma(0.5 * nu0, d)
            + 0.5 * nu0 * logdet0 - 0.5 * nun * ld + 0.5 * d * (math.log(r0) - math.log(rn)))


@njit(cache=True)
def gw_log_ml_merged(ns, vs, k_count, n, v, psi0, logdet0, r0, nu0, d, out):
    work = np.empty((d, d))
    vv = np.empty(v.shape[0])
    base = _lmvgamma(0.5 * nu0, d)
    for k in range(k_count):
        nk = ns[k] + n
        for t in range(v.shape[0]):
            vv[t] = vs[k, t] + v[t]
        _post_scale(nk, vv, psi0, r0, d, work)
        ld = _chol_inplace(work, d)
        nun = nu0 + nk
        out[k] = (-0.5 * nk * d * LOG_PI + _lmvgamma(0.5 * nun, d) - base
                  + 0.5 * nu0 * logdet0 - 0.5 * nun * ld
                  + 0.5 * d * (math.log(r0) - math.log(r0 + nk)))


@njit(cache=True)
def gw_pred_cache(n, v, psi0, r0, nu0, d, mean, linv):
    """Fill predictive caches for one cluster; returns (c1, coef, expo)."""
    work = np.empty((d, d))
    _post_scale(n, v, psi0, r0, d, work)
    ld = _chol_inplace(work, d)
    rn = r0 + n
    nun = nu0 + n
    for i in range(d):
        mean[i] = v[i] / rn
    # invert the lower triangular factor
    for i in range(d):
        for j in range(d):
            linv[i, j] = 0.0
    for i in range(d):
        linv[i, i] = 1.0 / work[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s -= work[i, k] * linv[k, j]
            linv[i, j] = s / work[i, i]
    coef = rn / (rn + 1.0)
    c1 = (math.lgamma(0.5 * (nun + 1.0)) - math.lgamma(0.5 * (nun + 1.0 - d))
          - 0.5 * d * LOG_PI + 0.5 * d * math.log(coef) - 0.5 * ld)
    return c1, coef, 0.5 * (nun + 1.0)


@njit(cache=True)
def gw_pred_batch(means, linvs, c1, coef, expo, k_count, x, d, out):
    for k in range(k_count):
        q = 0.0
        for i in range(d):
            s = 0.0
            for j in range(i + 1):
                s += linvs[k, i, j] * (x[j] - means[k, j])
            q += s * s
        out[k] = c1[k] - expo[k] * math.log1p(coef[k] * q)


@njit(cache=True)
def gw_log_pred(n, v, x, psi0, r0, nu0, d):
    """Closed-form Student-t log predictive of the centred point ``x``."""
    work = np.empty((d, d))
    _post_scale(n, v, psi0, r0, d, work)
    ld = _chol_inplace(work, d)
    rn = r0 + n
    nun = nu0 + n
    # forward substitution L z = x - mean
    z = np.empty(d)
    q = 0.0
    for i in range(d):
        s = x[i] - v[i] / rn
        for k in range(i):
            s -= work[i, k] * z[k]
        z[i] = s / work[i, i]
        q += z[i] * z[i]
    coef = rn / (rn + 1.0)
    return (math.lgamma(0.5 * (nun + 1.0)) - math.lgamma(0.5 * (nun + 1.0 - d))
            - 0.5 * d * LOG_PI + 0.5 * d * math.log(coef) - 0.5 * ld
            - 0.5 * (nun + 1.0) * math.log1p(coef * q))


@njit(cache=True)
def gw_log_ml2(n1, v1, n2, v2, psi0, logdet0, r0, nu0, d):
    """Evidence of the union of two clusters without forming summed stats."""
    n = n1 + n2
    if n == 0:
        return 0.0
    rn = r0 + n
    work = np.empty((d, d))
    for i in range(d):
        si = v1[i] + v2[i]
        for j in range(d):
            t = d + i * d + j
            work[i, j] = psi0[i, j] + v1[t] + v2[t] - si * (v1[j] + v2[j]) / rn
    ld = _chol_inplace(work, d)
    nun = nu0 + n
    return (-0.5 * n * d * LOG_PI + _lmvgamma(0.5 * nun, d) - _lmvgamma(0.5 * nu0, d)
            + 0.5 * nu0 * logdet0 - 0.5 * nun * ld + 0.5 * d * (math.log(r0) - math.log(rn)))
