"""Non-stationary, non-separable space-time covariance assembly.

A per-point field of anisotropic latent length scales (l_x, l_y, l_t)
turns a stationary CH base kernel into a non-stationary one: each entry is
a normalizing prefactor times the base kernel evaluated at latent-scaled
space and time distances. When the `sparse` flag is set, entries are
additionally tapered by the unit-amplitude compact-support kernel at the
combined scaled distance, producing exact zeros and a zero pattern that
widens wherever the latent scales grow (adaptive local sparsity).

With a constant field the whole construction collapses to the stationary
gram with those scales; tests pin that reduction entry-wise.
"""

from __future__ import annotations

import math

import numpy as np

from nostill import backend
from nostill.stationary_kernels import _as_points


class LatentLengthField:
    """Latent length scales (l_x, l_y, l_t) evaluated at a list of points."""

    def __init__(self, points, lx, ly, lt):
        self.points = _as_points(points)
        n = self.points.shape[0]
        scales = np.empty((n, 3))
        for d, (name, vals) in enumerate((("lx", lx), ("ly", ly), ("lt", lt))):
            arr = np.asarray(vals, dtype=np.float64)
            if arr.shape != (n,):
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected ({n},) to match points"
                )
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
            scales[:, d] = arr
        self.scales = scales

    def __len__(self):
        return self.points.shape[0]

    @property
    def lx(self):
        return self.scales[:, 0]

    @property
    def ly(self):
        return self.scales[:, 1]

    @property
    def lt(self):
        return self.scales[:, 2]

    @classmethod
    def constant(cls, points, lx, ly, lt):
        pts = _as_points(points)
        n = pts.shape[0]
        return cls(pts, np.full(n, lx), np.full(n, ly), np.full(n, lt))


def prefactor(scales_i, scales_j):
    """Normalizing prefactor between two latent-scale triples.

    Product over dimensions of (l_i^2)^(1/4) (l_j^2)^(1/4) / sqrt of the
    arithmetic mean of the squares; always in (0, 1], and 1 exactly when
    the scales agree per dimension (AM-GM).
    """
    out = 1.0
    for li, lj in zip(scales_i, scales_j):
        if not (li > 0 and lj > 0) or not (math.isfinite(li) and math.isfinite(lj)):
            raise ValueError(f"latent scales must be positive, got {li!r}, {lj!r}")
        li2 = li * li
        lj2 = lj * lj
        out *= (li2 * lj2) ** 0.25 / math.sqrt((li2 + lj2) / 2.0)
    return out


def scaled_sq_dists(p_i, p_j, scales_i, scales_j):
    """Squared scaled distances (q_s, q_t) between two points.

    Each squared coordinate difference is divided by the arithmetic mean
    of the corresponding squared latent scales at the two points.
    """
    pi = np.asarray(p_i, dtype=np.float64)
    pj = np.asarray(p_j, dtype=np.float64)
    si = np.asarray(scales_i, dtype=np.float64)
    sj = np.asarray(scales_j, dtype=np.float64)
    if np.any(si <= 0) or np.any(sj <= 0):
        raise ValueError("latent scales must be positive")
    avg = (si**2 + sj**2) / 2.0
    d = pi - pj
    q_s = d[0] * d[0] / avg[0] + d[1] * d[1] / avg[1]
    q_t = d[2] * d[2] / avg[2]
    return float(q_s), float(q_t)


def gram_nonstationary(a, b, field_a, field_b, base, sparse=False):
    """Non-stationary gram between point sets with their latent fields.

    ``base`` is a KernelSpec with family CH1 or CH2 (its length_scales are
    ignored here; all scaling comes from the fields).
    """
    xa = _as_points(a)
    xb = _as_points(b)
    if base.family not in ("CH1", "CH2"):
        raise ValueError(f"base family must be CH1 or CH2, got {base.family!r}")
    for name, pts, field in (("a", xa, field_a), ("b", xb, field_b)):
        if len(field) != pts.shape[0] or not np.array_equal(field.points, pts):
            raise ValueError(f"field_{name} is not aligned with the point set {name}")
    return backend.gram_ns(
        xa, xb,
        np.ascontiguousarray(field_a.scales), np.ascontiguousarray(field_b.scales),
        base.sigma_f, float(base.spatial_dim_p),
        base.family == "CH2", base.ch2_overall_variance, bool(sparse),
    )
