"""Numba-compiled twins of the kernels in ``_accel_np``.

Same signatures and conventions; see that module's docstring. The regularized
upper incomplete gamma is implemented here (power series / Lentz continued
fraction) because numba cannot call scipy.special.
"""

import math

import numpy as np
from numba import njit, prange

_EXP_FLOOR = -745.0  # log of the smallest positive normal double, roughly


@njit(cache=True)
def _q_scalar(a, x):
    """Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0."""
    if x <= 0.0:
        return 1.0
    lg = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # series for the lower function P, Q = 1 - P
        ap = a
        summ = 1.0 / a
        term = summ
        for _ in range(600):
            ap += 1.0
            term *= x / ap
            summ += term
            if abs(term) < abs(summ) * 1e-17:
                break
        if lg < _EXP_FLOOR:
            return 1.0
        return 1.0 - summ * math.exp(lg)
    if lg < _EXP_FLOOR:
        return 0.0
    # modified Lentz continued fraction for Q
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 600):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        dl = d * c
        h *= dl
        if abs(dl - 1.0) < 1e-17:
            break
    return math.exp(lg) * h


@njit(cache=True)
def _window_scalar(rho2, a, t_lo, t_hi):
    if np.isinf(t_hi):
        q = 1.0
    else:
        q = _q_scalar(a, rho2 / (4.0 * t_hi))
    if t_lo > 0.0:
        q -= _q_scalar(a, rho2 / (4.0 * t_lo))
    return rho2 ** (-a) * q


@njit(cache=True)
def power_window(rho2, a, t_lo, t_hi):
    rho2 = np.asarray(rho2)
    out = np.empty(rho2.size)
    flat = rho2.ravel()
    for i in range(flat.size):
        out[i] = _window_scalar(flat[i], a, t_lo, t_hi)
    return out.reshape(rho2.shape)


@njit(cache=True)
def _image_offsets(lengths, mmax):
    total = 1
    for m in mmax:
        total *= 2 * m + 1
    n = lengths.size
    offs = np.empty((total, n))
    for flat in range(total):
        rem = flat
        for j in range(n):
            span = 2 * mmax[j] + 1
            mj = rem % span - mmax[j]
            rem //= span
            offs[flat, j] = lengths[j] * mj
    return offs


@njit(cache=True)
def torus_smallt_pairs(dx, lengths, a, t_lo, t_hi, eps2, mmax):
    offs = _image_offsets(lengths, mmax)
    p = dx.shape[0]
    n = dx.shape[1]
    out = np.zeros(p)
    for i in range(p):
        acc = 0.0
        for k in range(offs.shape[0]):
            rho2 = eps2
            for j in range(n):
                r = dx[i, j] + offs[k, j]
                rho2 += r * r
            acc += _window_scalar(rho2, a, t_lo, t_hi)
        out[i] = acc
    return out


@njit(cache=True, parallel=True)
def torus_smallt_matrix(pos, lengths, a, t_lo, t_hi, eps2, mmax):
    offs = _image_offsets(lengths, mmax)
    n = pos.shape[0]
    dim = pos.shape[1]
    out = np.empty((n, n))
    for i in prange(n):
        for jj in range(i, n):
            acc = 0.0
            for k in range(offs.shape[0]):
                rho2 = eps2
                for j in range(dim):
                    r = pos[jj, j] - pos[i, j] + offs[k, j]
                    rho2 += r * r
                acc += _window_scalar(rho2, a, t_lo, t_hi)
            out[i, jj] = acc
            out[jj, i] = acc
    return out


@njit(cache=True, parallel=True)
def heat_images(dx, lengths, ts, mmax):
    p = dx.shape[0]
    nt = ts.size
    nax = lengths.size
    out = np.ones((p, nt))
    for i in prange(p):
        for k in range(nt):
            t = ts[k]
            val = 1.0
            for j in range(nax):
                ax = 0.0
                for m in range(-mmax[j], mmax[j] + 1):
                    r = dx[i, j] + lengths[j] * m
                    e = -r * r / (4.0 * t)
                    if e > _EXP_FLOOR:
                        ax += math.exp(e)
                val *= ax / math.sqrt(4.0 * math.pi * t)
            out[i, k] = val
    return out


@njit(cache=True, parallel=True)
def dist_smallt_pairs(d2, a, t_lo, t_hi, eps2):
    d2 = np.asarray(d2)
    flat = d2.ravel()
    out = np.empty(flat.size)
    for i in prange(flat.size):
        out[i] = _window_scalar(flat[i] + eps2, a, t_lo, t_hi)
    return out.reshape(d2.shape)
