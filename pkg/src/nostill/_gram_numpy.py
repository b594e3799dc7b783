"""Pure-numpy gram kernels.

Vectorized twins of the numba implementations in ``_gram_numba``; selected
via the ``NOSTILL_BACKEND`` environment flag (see ``nostill.backend``).
Every function here must produce the same values as its numba twin to
within floating-point noise; ``tests/test_backend.py`` enforces this.

Point arrays are (n, 3) float64 with columns (x, y, t). Latent-scale
arrays are (n, 3) float64 with columns (l_x, l_y, l_t).
"""

import numpy as np

TWO_PI = 2.0 * np.pi


def _esgp_unit(tau):
    """Compactly supported unit-amplitude kernel of the scaled distance tau.

    Exactly zero (not merely small) for tau >= 1.
    """
    inside = tau < 1.0
    t = np.where(inside, tau, 0.0)
    val = (2.0 + np.cos(TWO_PI * t)) / 3.0 * (1.0 - t) + np.sin(TWO_PI * t) / TWO_PI
    return np.where(inside, val, 0.0)


def gram_ch(xa, xb, ls, sigma_f, p, use_ch2, ch2_overall):
    """Stationary non-separable space-time gram for the CH families.

    h^2 = (dx/ls[0])^2 + (dy/ls[1])^2, u^2 = (dt/ls[2])^2 per pair.
    """
    dx = (xa[:, 0, None] - xb[None, :, 0]) / ls[0]
    dy = (xa[:, 1, None] - xb[None, :, 1]) / ls[1]
    dt = (xa[:, 2, None] - xb[None, :, 2]) / ls[2]
    h2 = dx * dx + dy * dy
    u2 = dt * dt
    sf2 = sigma_f * sigma_f
    if use_ch2:
        out = (sf2 * u2 + 1.0) / ((u2 + 1.0) ** 2 + h2) ** (p / 2.0)
        if ch2_overall:
            out = sf2 * out
    else:
        out = sf2 / (u2 + 1.0) ** ((p - 1.0) / 2.0) * np.exp(-h2 / (u2 + 1.0))
    return out


def gram_iso(xa, xb, ls, sigma_f, use_sqexp):
    """Isotropic gram on the per-dimension scaled 3-D distance.

    tau^2 = (dx/ls[0])^2 + (dy/ls[1])^2 + (dt/ls[2])^2. Squared
    exponential or the compactly supported kernel.
    """
    dx = (xa[:, 0, None] - xb[None, :, 0]) / ls[0]
    dy = (xa[:, 1, None] - xb[None, :, 1]) / ls[1]
    dt = (xa[:, 2, None] - xb[None, :, 2]) / ls[2]
    tau2 = dx * dx + dy * dy + dt * dt
    sf2 = sigma_f * sigma_f
    if use_sqexp:
        return sf2 * np.exp(-0.5 * tau2)
    return sf2 * _esgp_unit(np.sqrt(tau2))


def gram_ns(xa, xb, la, lb, sigma_f, p, use_ch2, ch2_overall, sparse):
    """Non-stationary space-time gram from per-point latent length scales.

    Entry (i, j) is the per-dimension prefactor
    (l_i^2 l_j^2)^{1/4} / sqrt((l_i^2 + l_j^2)/2) times the base CH kernel
    evaluated at the latent-scaled distances, optionally tapered by the
    unit-amplitude compact-support kernel at sqrt(q_s + q_t).
    """
    la2 = la * la
    lb2 = lb * lb

    pref = np.ones((xa.shape[0], xb.shape[0]))
    avg = []
    for d in range(3):
        a = (la2[:, d, None] + lb2[None, :, d]) / 2.0
        pref = pref * ((la2[:, d, None] * lb2[None, :, d]) ** 0.25 / np.sqrt(a))
        avg.append(a)

    dx = xa[:, 0, None] - xb[None, :, 0]
    dy = xa[:, 1, None] - xb[None, :, 1]
    dt = xa[:, 2, None] - xb[None, :, 2]
    qs = dx * dx / avg[0] + dy * dy / avg[1]
    qt = dt * dt / avg[2]

    sf2 = sigma_f * sigma_f
    if use_ch2:
        base = (sf2 * qt + 1.0) / ((qt + 1.0) ** 2 + qs) ** (p / 2.0)
        if ch2_overall:
            base = sf2 * base
    else:
        base = sf2 / (qt + 1.0) ** ((p - 1.0) / 2.0) * np.exp(-qs / (qt + 1.0))

    out = pref * base
    if sparse:
        out = out * _esgp_unit(np.sqrt(qs + qt))
    return out
