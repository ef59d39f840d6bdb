"""Pure-numpy implementations of the hot pairwise kernels.

Selected by ``FRACLAP_BACKEND=numpy`` (see :mod:`fraclap.backend`). The numba
twin in ``_accel_nb`` carries the same signatures; ``tests/test_backends.py``
pins the two against each other.

Conventions shared by both backends:

* ``power_window(rho2, a, t_lo, t_hi)`` returns
  ``rho2**(-a) * (Q(a, rho2/(4 t_hi)) - Q(a, rho2/(4 t_lo)))`` with ``Q`` the
  regularized upper incomplete gamma.  Multiplying by ``alpha_ns`` gives the
  exact value of ``c_s * int_{t_lo}^{t_hi} (4 pi t)^(-n/2)
  exp(-rho2/(4t)) t^(-1-s/2) dt`` where ``a = (n+s)/2``.  ``t_lo = 0`` and
  ``t_hi = inf`` are valid.
* torus routines sum that window over lattice images ``r_m^2 = |dx + L m|^2``
  (shifted by ``eps2`` for the regularized kernel).
"""

import numpy as np
from scipy.special import gammaincc


def _q(a, x):
    return gammaincc(a, x)


def power_window(rho2, a, t_lo, t_hi):
    rho2 = np.asarray(rho2, dtype=np.float64)
    x_hi = np.zeros_like(rho2) if np.isinf(t_hi) else rho2 / (4.0 * t_hi)
    out = _q(a, x_hi)
    if t_lo > 0.0:
        out = out - _q(a, rho2 / (4.0 * t_lo))
    # rho2 = 0 with t_lo = 0 is the genuine kernel singularity: inf here,
    # zeroed or shifted by every caller that needs a finite diagonal
    with np.errstate(divide="ignore"):
        return rho2 ** (-a) * out


def _image_offsets(lengths, mmax):
    """All lattice offsets L*m with |m_j| <= mmax_j, as an (M, n) array."""
    axes = [l * np.arange(-m, m + 1, dtype=np.float64)
            for l, m in zip(lengths, mmax)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def torus_smallt_pairs(dx, lengths, a, t_lo, t_hi, eps2, mmax):
    """Image-summed power window for displacement vectors dx (P, n)."""
    dx = np.atleast_2d(np.asarray(dx, dtype=np.float64))
    offs = _image_offsets(lengths, mmax)
    out = np.zeros(dx.shape[0])
    for off in offs:
        rho2 = np.sum((dx + off) ** 2, axis=1) + eps2
        out += power_window(rho2, a, t_lo, t_hi)
    return out


def torus_smallt_matrix(pos, lengths, a, t_lo, t_hi, eps2, mmax):
    """Pairwise image-summed power window over all node pairs.

    Returns a symmetric (N, N) array; the diagonal is included (finite only
    when ``eps2 > 0`` or ``t_lo > 0``, infinite otherwise by convention of
    ``power_window``).
    """
    pos = np.asarray(pos, dtype=np.float64)
    n = pos.shape[0]
    out = np.empty((n, n))
    offs = _image_offsets(lengths, mmax)
    for i in range(n):
        dx = pos[i + 1:] - pos[i]
        acc = np.zeros(n - i - 1)
        for off in offs:
            rho2 = np.sum((dx + off) ** 2, axis=1) + eps2
            acc += power_window(rho2, a, t_lo, t_hi)
        out[i, i + 1:] = acc
        out[i + 1:, i] = acc
        diag = 0.0
        for off in offs:
            rho2 = np.sum(off ** 2) + eps2
            diag += float(power_window(rho2, a, t_lo, t_hi))
        out[i, i] = diag
    return out


def heat_images(dx, lengths, ts, mmax):
    """Flat-torus heat kernel by lattice image summation.

    dx: (P, n) displacement vectors, ts: (T,) times. Returns (P, T).
    The kernel factorizes across axes, so the image sum is taken per axis.
    """
    dx = np.atleast_2d(np.asarray(dx, dtype=np.float64))
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    out = np.ones((dx.shape[0], ts.size))
    for j, (lj, mj) in enumerate(zip(lengths, mmax)):
        ax = np.zeros_like(out)
        for m in range(-int(mj), int(mj) + 1):
            r = dx[:, j] + lj * m
            ax += np.exp(-np.outer(r * r, 1.0 / (4.0 * ts)))
        out *= ax / np.sqrt(4.0 * np.pi * ts)[None, :]
    return out


def dist_smallt_pairs(d2, a, t_lo, t_hi, eps2):
    """Single-chart power window at squared distances d2 (any shape)."""
    return power_window(np.asarray(d2, dtype=np.float64) + eps2, a, t_lo, t_hi)
