"""Stationary base covariance families.

Two non-separable space-time families (CH1, CH2), the compactly supported
ESGP kernel with exact zeros beyond scaled distance 1, and the squared
exponential. Scalar evaluators are the ground truth; gram assembly runs on
the active backend (numba or numpy) and must match the scalars entry-wise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from nostill import backend

FAMILIES = ("CH1", "CH2", "ESGP", "SqExp")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class KernelSpec:
    """Stationary kernel family plus hyperparameters.

    sigma_f is the signal amplitude; spatial_dim_p the exponent of the CH
    families; length_scales (l_x, l_y, l_t) are used only when the kernel
    runs in standalone mode, i.e. scaled distances are produced internally
    by ``gram_stationary``. ch2_overall_variance optionally multiplies the
    CH2 value (which is 1 at zero distance as printed) by sigma_f**2.
    """

    family: str
    sigma_f: float = 1.0
    spatial_dim_p: int = 2
    length_scales: tuple[float, ...] | None = None
    ch2_overall_variance: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (math.isfinite(self.sigma_f) and self.sigma_f > 0):
            raise ValueError(f"sigma_f must be positive, got {self.sigma_f!r}")
        if self.spatial_dim_p < 1:
            raise ValueError(f"spatial_dim_p must be >= 1, got {self.spatial_dim_p!r}")
        if self.length_scales is not None:
            ls = tuple(float(v) for v in self.length_scales)
            if any(not math.isfinite(v) or v <= 0 for v in ls):
                raise ValueError(f"length scales must be positive, got {ls}")
            object.__setattr__(self, "length_scales", ls)

    def with_scales(self, length_scales):
        return replace(self, length_scales=tuple(float(v) for v in length_scales))

    def to_dict(self):
        d = {
            "family": self.family,
            "sigma_f": self.sigma_f,
            "spatial_dim_p": self.spatial_dim_p,
            "ch2_overall_variance": self.ch2_overall_variance,
        }
        if self.length_scales is not None:
            d["length_scales"] = list(self.length_scales)
        return d

    @classmethod
    def from_dict(cls, d):
        ls = d.get("length_scales")
        return cls(
            family=d["family"],
            sigma_f=float(d["sigma_f"]),
            spatial_dim_p=int(d.get("spatial_dim_p", 2)),
            length_scales=None if ls is None else tuple(ls),
            ch2_overall_variance=bool(d.get("ch2_overall_variance", False)),
        )


def _check_dist(name, v):
    if not math.isfinite(v) or v < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


def eval_ch1(h, u, spec):
    """First CH family: sigma_f^2 / (u^2+1)^((p-1)/2) * exp(-h^2 / (u^2+1))."""
    _check_dist("h", h)
    _check_dist("u", u)
    sf2 = spec.sigma_f**2
    denom = u * u + 1.0
    return sf2 / denom ** ((spec.spatial_dim_p - 1) / 2.0) * math.exp(-h * h / denom)


def eval_ch2(h, u, spec):
    """Second CH family: (sigma_f^2 u^2 + 1) / ((u^2+1)^2 + h^2)^(p/2)."""
    _check_dist("h", h)
    _check_dist("u", u)
    sf2 = spec.sigma_f**2
    val = (sf2 * u * u + 1.0) / ((u * u + 1.0) ** 2 + h * h) ** (spec.spatial_dim_p / 2.0)
    if spec.ch2_overall_variance:
        val = sf2 * val
    return val


def eval_esgp(tau, spec):
    """Compactly supported kernel: exactly 0 for tau >= 1, C^2-smooth at 1."""
    _check_dist("tau", tau)
    if tau >= 1.0:
        return 0.0
    sf2 = spec.sigma_f**2
    return sf2 * (
        (2.0 + math.cos(TWO_PI * tau)) / 3.0 * (1.0 - tau)
        + math.sin(TWO_PI * tau) / TWO_PI
    )


def eval_sqexp(tau, spec):
    """Squared exponential on the scaled distance: sigma_f^2 exp(-tau^2/2)."""
    _check_dist("tau", tau)
    return spec.sigma_f**2 * math.exp(-0.5 * tau * tau)


def _as_points(a):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) point array, got shape {arr.shape}")
    return arr


def gram_stationary(a, b, spec):
    """Gram matrix of the stationary kernel between two point sets.

    For CH1/CH2 the scaled distances are h = sqrt((dx/l_x)^2 + (dy/l_y)^2)
    and u = |dt|/l_t; for ESGP/SqExp a single isotropic scaled distance
    tau = sqrt((dx/l_x)^2 + (dy/l_y)^2 + (dt/l_t)^2) is used.
    """
    if spec.length_scales is None or len(spec.length_scales) != 3:
        raise ValueError(
            "gram_stationary needs 3 length scales (l_x, l_y, l_t), "
            f"got {spec.length_scales!r}"
        )
    xa = _as_points(a)
    xb = _as_points(b)
    ls = np.asarray(spec.length_scales, dtype=np.float64)
    if spec.family in ("CH1", "CH2"):
        return backend.gram_ch(
            xa, xb, ls, spec.sigma_f, float(spec.spatial_dim_p),
            spec.family == "CH2", spec.ch2_overall_variance,
        )
    return backend.gram_iso(xa, xb, ls, spec.sigma_f, spec.family == "SqExp")
