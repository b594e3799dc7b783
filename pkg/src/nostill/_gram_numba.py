"""Numba-JIT gram kernels: the default backend for hot covariance loops.

Signatures mirror ``_gram_numpy`` exactly; ``nostill.backend`` picks one of
the two modules at import time based on the ``NOSTILL_BACKEND`` env flag.
fastmath stays off so results track the numpy path and compact-support
zeros stay exact.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def _esgp_unit_scalar(tau):
    if tau >= 1.0:
        return 0.0
    return (2.0 + np.cos(TWO_PI * tau)) / 3.0 * (1.0 - tau) + np.sin(TWO_PI * tau) / TWO_PI


@njit(cache=True)
def gram_ch(xa, xb, ls, sigma_f, p, use_ch2, ch2_overall):
    n = xa.shape[0]
    m = xb.shape[0]
    out = np.empty((n, m))
    sf2 = sigma_f * sigma_f
    for i in range(n):
        for j in range(m):
            dx = (xa[i, 0] - xb[j, 0]) / ls[0]
            dy = (xa[i, 1] - xb[j, 1]) / ls[1]
            dt = (xa[i, 2] - xb[j, 2]) / ls[2]
            h2 = dx * dx + dy * dy
            u2 = dt * dt
            if use_ch2:
                k = (sf2 * u2 + 1.0) / ((u2 + 1.0) ** 2 + h2) ** (p / 2.0)
                if ch2_overall:
                    k = sf2 * k
            else:
                k = sf2 / (u2 + 1.0) ** ((p - 1.0) / 2.0) * np.exp(-h2 / (u2 + 1.0))
            out[i, j] = k
    return out


@njit(cache=True)
def gram_iso(xa, xb, ls, sigma_f, use_sqexp):
    n = xa.shape[0]
    m = xb.shape[0]
    out = np.empty((n, m))
    sf2 = sigma_f * sigma_f
    for i in range(n):
        for j in range(m):
            dx = (xa[i, 0] - xb[j, 0]) / ls[0]
            dy = (xa[i, 1] - xb[j, 1]) / ls[1]
            dt = (xa[i, 2] - xb[j, 2]) / ls[2]
            tau2 = dx * dx + dy * dy + dt * dt
            if use_sqexp:
                out[i, j] = sf2 * np.exp(-0.5 * tau2)
            else:
                out[i, j] = sf2 * _esgp_unit_scalar(np.sqrt(tau2))
    return out


@njit(cache=True)
def gram_ns(xa, xb, la, lb, sigma_f, p, use_ch2, ch2_overall, sparse):
    n = xa.shape[0]
    m = xb.shape[0]
    out = np.empty((n, m))
    sf2 = sigma_f * sigma_f
    la2 = la * la
    lb2 = lb * lb
    for i in range(n):
        for j in range(m):
            ax = (la2[i, 0] + lb2[j, 0]) / 2.0
            ay = (la2[i, 1] + lb2[j, 1]) / 2.0
            at = (la2[i, 2] + lb2[j, 2]) / 2.0
            pref = (
                (la2[i, 0] * lb2[j, 0]) ** 0.25 / np.sqrt(ax)
                * ((la2[i, 1] * lb2[j, 1]) ** 0.25 / np.sqrt(ay))
                * ((la2[i, 2] * lb2[j, 2]) ** 0.25 / np.sqrt(at))
            )
            dx = xa[i, 0] - xb[j, 0]
            dy = xa[i, 1] - xb[j, 1]
            dt = xa[i, 2] - xb[j, 2]
            qs = dx * dx / ax + dy * dy / ay
            qt = dt * dt / at
            if use_ch2:
                base = (sf2 * qt + 1.0) / ((qt + 1.0) ** 2 + qs) ** (p / 2.0)
                if ch2_overall:
                    base = sf2 * base
            else:
                base = sf2 / (qt + 1.0) ** ((p - 1.0) / 2.0) * np.exp(-qs / (qt + 1.0))
            k = pref * base
            if sparse:
                k = k * _esgp_unit_scalar(np.sqrt(qs + qt))
            out[i, j] = k
    return out
