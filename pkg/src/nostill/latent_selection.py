"""Choosing the m induced latent locations.

Methods: greedy entropy / mutual-information selection over either the
empirical covariance (separately across space and time, combined as a
product grid) or a trained stationary model's gram over all training
points (non-separable); deterministic uniform strides; or pseudo-input
coordinates optimized against a low-rank-plus-diagonal (FITC-style)
likelihood with hyperparameters frozen.

Greedy scores are computed per candidate via Schur-complement posterior
log-determinants, argmin of the unselected entropy or argmax of the
mutual information, ties broken by lowest index.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from nostill import optimize
from nostill.data_model import DataError, rectangular_view
from nostill.gp_core import NumericalError, chol_with_jitter, posterior_logdet
from nostill.stationary_kernels import gram_stationary, _as_points

log = logging.getLogger("nostill")

METHODS = (
    "greedy-entropy", "greedy-mi",
    "greedy-entropy-empirical", "greedy-mi-empirical",
    "pseudo-input", "uniform",
)

GREEDY_JITTER = 1e-8


@dataclass(frozen=True)
class SelectionPlan:
    """Which selection method to run and how many latent locations.

    Empirical (separable) methods need m_space and m_time and return
    their product grid; the others need m_total. krause_mi switches the
    mutual-information score to the H(x|selected) - H(x|complement)
    variant instead of the whole-remainder difference.
    """

    method: str
    m_total: int | None = None
    m_space: int | None = None
    m_time: int | None = None
    krause_mi: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown selection method {self.method!r}")
        if self.is_separable:
            if not (self.m_space and self.m_space >= 1 and self.m_time and self.m_time >= 1):
                raise ValueError(f"{self.method} requires m_space >= 1 and m_time >= 1")
        elif not (self.m_total and self.m_total >= 1):
            raise ValueError(f"{self.method} requires m_total >= 1")

    @property
    def is_separable(self):
        return self.method.endswith("-empirical")

    @property
    def m(self):
        return self.m_space * self.m_time if self.is_separable else self.m_total

    def to_dict(self):
        return {
            "method": self.method, "m_total": self.m_total,
            "m_space": self.m_space, "m_time": self.m_time,
            "krause_mi": self.krause_mi,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            method=d["method"],
            m_total=d.get("m_total"),
            m_space=d.get("m_space"),
            m_time=d.get("m_time"),
            krause_mi=bool(d.get("krause_mi", False)),
        )


def empirical_covariance(data, axis):
    """Sample covariance across stations (axis="space", S x S over time
    samples) or across timesteps (axis="time", T x T over station
    samples); requires rectangular data and at least 2 samples."""
    rv = rectangular_view(data)
    if axis == "space":
        if rv.n_times < 2:
            raise DataError("need at least 2 timesteps for the spatial covariance")
        C = np.cov(rv.values, ddof=1)
    elif axis == "time":
        if rv.n_stations < 2:
            raise DataError("need at least 2 stations for the temporal covariance")
        C = np.cov(rv.values.T, ddof=1)
    else:
        raise ValueError(f"axis must be 'space' or 'time', got {axis!r}")
    C = np.atleast_2d(C)
    return (C + C.T) / 2.0


def greedy_select(cov, k, criterion, krause_mi=False):
    """Greedily pick k of the candidate indices of a covariance matrix.

    criterion "entropy" minimizes the posterior log-determinant of the
    unselected candidates given the picks; "mi" maximizes the printed
    mutual-information difference (or the Krause variant when asked).
    """
    C = np.asarray(cov, dtype=np.float64)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n:
        raise ValueError(f"covariance must be square, got shape {C.shape}")
    if not np.allclose(C, C.T, rtol=1e-8, atol=1e-10):
        raise ValueError("covariance matrix is not symmetric")
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < {n}, got k={k}")
    if criterion not in ("entropy", "mi"):
        raise ValueError(f"criterion must be 'entropy' or 'mi', got {criterion!r}")
    C = (C + C.T) / 2.0 + GREEDY_JITTER * np.eye(n)
    try:
        chol_with_jitter(C)
    except NumericalError as exc:
        raise NumericalError("candidate covariance is not PSD after jitter") from exc

    selected = []
    for _ in range(k):
        chosen = None
        best = np.inf
        in_sel = np.zeros(n, dtype=bool)
        in_sel[selected] = True
        for cand in range(n):
            if in_sel[cand]:
                continue
            s_prime = selected + [cand]
            rest = [i for i in range(n) if i not in s_prime and not in_sel[i] or i == cand and False]
            rest = [i for i in range(n) if not in_sel[i] and i != cand]
            if criterion == "entropy":
                score = posterior_logdet(C, rest, s_prime)
            elif krause_mi:
                score = -(posterior_logdet(C, [cand], selected)
                          - posterior_logdet(C, [cand], rest))
            else:
                score = -(posterior_logdet(C, rest, [])
                          - posterior_logdet(C, rest, s_prime))
            if score < best:
                best = score
                chosen = cand
        selected.append(chosen)
    return selected


def _uniform_order(points):
    # canonical grid order: time, then x, then y
    return np.lexsort((points[:, 1], points[:, 0], points[:, 2]))


def select_latents(data, plan, stationary_spec=None, noise_var=None,
                   train_config=None):
    """Return the (m, 3) latent locations for a dataset under a plan."""
    points = data.points()
    n = points.shape[0]

    if plan.method == "uniform":
        if plan.m_total > n:
            raise ValueError(f"m_total={plan.m_total} exceeds {n} training points")
        order = _uniform_order(points)
        picks = [order[i * n // plan.m_total] for i in range(plan.m_total)]
        return points[picks].copy()

    if plan.is_separable:
        crit = "entropy" if "entropy" in plan.method else "mi"
        rv = rectangular_view(data)
        sel_s = greedy_select(empirical_covariance(data, "space"), plan.m_space,
                              crit, plan.krause_mi)
        sel_t = greedy_select(empirical_covariance(data, "time"), plan.m_time,
                              crit, plan.krause_mi)
        out = [
            (rv.coords[s, 0], rv.coords[s, 1], rv.times[t])
            for s in sel_s for t in sel_t
        ]
        return np.array(out, dtype=np.float64)

    if plan.method in ("greedy-entropy", "greedy-mi"):
        if stationary_spec is None:
            raise ValueError(f"{plan.method} needs a trained stationary kernel spec")
        crit = "entropy" if plan.method == "greedy-entropy" else "mi"
        C = gram_stationary(points, points, stationary_spec)
        picks = greedy_select(C, plan.m_total, crit, plan.krause_mi)
        return points[picks].copy()

    # pseudo-input
    if stationary_spec is None or noise_var is None:
        raise ValueError("pseudo-input selection needs a trained stationary model")
    cfg = train_config if train_config is not None else optimize.TrainConfig(seed=0)
    return learn_pseudo_inputs(data, plan.m_total, stationary_spec, noise_var, cfg)


def fitc_lml(points, values, pseudo_points, spec, noise_var):
    """Log marginal likelihood under the low-rank-plus-diagonal covariance
    K_nm K_m^-1 K_mn + diag(K_n - K_nm K_m^-1 K_mn) + noise."""
    X = _as_points(points)
    y = np.asarray(values, dtype=np.float64)
    Xb = _as_points(pseudo_points)
    n = X.shape[0]
    k0 = float(gram_stationary(X[:1], X[:1], spec)[0, 0])
    Kmm = gram_stationary(Xb, Xb, spec)
    Lm, _ = chol_with_jitter(Kmm)
    Knm = gram_stationary(X, Xb, spec)
    A = sla.solve_triangular(Lm, Knm.T, lower=True)  # (m, n)
    qdiag = np.sum(A * A, axis=0)
    lam = np.clip(k0 - qdiag, 0.0, None) + noise_var
    K = A.T @ A + np.diag(lam)
    L, _ = chol_with_jitter(K)
    alpha = sla.cho_solve((L, True), y)
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    return -0.5 * float(y @ alpha) - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi)


def _farthest_point_seed(points, m):
    # deterministic: start nearest the centroid, then repeatedly add the
    # point farthest (extent-scaled) from everything chosen so far
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    Z = (points - lo) / span
    first = int(np.argmin(np.sum((Z - Z.mean(axis=0)) ** 2, axis=1)))
    chosen = [first]
    mind = np.sum((Z - Z[first]) ** 2, axis=1)
    while len(chosen) < m:
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, np.sum((Z - Z[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def learn_pseudo_inputs(data, m, spec, noise_var, config):
    """Optimize the coordinates of m pseudo inputs against the FITC-style
    likelihood, hyperparameters frozen, coordinates bounded by the
    training bounding box. Seeded by farthest-point traversal."""
    points = data.points()
    values = data.values()
    n = points.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= {n}, got m={m}")
    init = _farthest_point_seed(points, m)
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    bounds = [(lo[d], hi[d]) for _ in range(m) for d in range(3)]

    def objective(vec):
        try:
            return fitc_lml(points, values, vec.reshape(m, 3), spec, noise_var)
        except NumericalError:
            return -np.inf

    result = optimize.maximize(objective, init.ravel(), config, bounds=bounds,
                               stage="pseudo-input")
    return result.x.reshape(m, 3).copy()


def export_latents_csv(points, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "t"])
        for row in np.asarray(points):
            writer.writerow([repr(float(v)) for v in row])
