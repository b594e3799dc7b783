"""Seeded multi-restart maximization of likelihood objectives.

All positive hyperparameters are handled in log space by the callers;
this module only sees flat real vectors. The engine is L-BFGS-B with
two-point finite-difference gradients: deterministic for a fixed seed and
config, stopping on relative objective change below `tol` or the
iteration cap. Restart 0 starts exactly at the supplied initialization,
so the best result can never fall below the initial objective; further
restarts perturb the start point log-uniformly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt

from nostill.gp_core import NumericalError

log = logging.getLogger("nostill")

# Objective values at or below -PENALTY mean "evaluation failed".
PENALTY = 1e25

# Multiplicative half-range for restart perturbations (log-uniform).
RESTART_SPREAD = 4.0


@dataclass
class TrainConfig:
    """Optimizer budget: restarts, iteration cap, relative tolerance, seed."""

    restarts: int = 3
    max_iters: int = 200
    tol: float = 1e-6
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        return cls(
            restarts=int(d.get("restarts", 3)),
            max_iters=int(d.get("max_iters", 200)),
            tol=float(d.get("tol", 1e-6)),
            seed=int(d["seed"]),
        )


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    history: list = field(default_factory=list)  # accepted-step objective values
    restart: int = 0
    n_evals: int = 0


class _Objective:
    """Negated, sanitized objective with a ring buffer of recent evals so
    the iteration callback can recover f(xk) without re-evaluating."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.n_evals = 0
        self.recent = []
        self.cap = 2 * dim + 16

    def __call__(self, x):
        self.n_evals += 1
        try:
            val = self.fn(np.asarray(x, dtype=np.float64))
        except (NumericalError, FloatingPointError):
            val = None
        f = PENALTY if val is None or not np.isfinite(val) else -float(val)
        self.recent.append((np.array(x, dtype=np.float64), f))
        if len(self.recent) > self.cap:
            self.recent.pop(0)
        return f

    def lookup(self, x):
        for xs, f in reversed(self.recent):
            if np.array_equal(xs, x):
                return f
        return self(x)


def maximize(objective, x0, config, bounds=None, stage="train"):
    """Maximize `objective` from `x0` under the TrainConfig contract.

    bounds, when given, is a list of (lo, hi) pairs per coordinate.
    Raises NumericalError if no restart produced a valid objective value.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    dim = x0.size
    rng = np.random.default_rng(config.seed)

    if config.max_iters == 0:
        wrapped = _Objective(objective, dim)
        f0 = wrapped(x0)
        if f0 >= PENALTY:
            raise NumericalError(f"[{stage}] objective invalid at initialization")
        log.info("[%s] restart=0 iter=0 lml=%.10g", stage, -f0)
        return OptResult(x=x0.copy(), value=-f0, history=[-f0], restart=0,
                         n_evals=wrapped.n_evals)

    best = None
    total_evals = 0
    for r in range(max(1, config.restarts)):
        if r == 0:
            start = x0.copy()
        else:
            start = x0 + rng.uniform(-np.log(RESTART_SPREAD),
                                     np.log(RESTART_SPREAD), size=dim)
            if bounds is not None:
                lo = np.array([b[0] for b in bounds])
                hi = np.array([b[1] for b in bounds])
                start = np.clip(start, lo, hi)
        wrapped = _Objective(objective, dim)
        history = [-wrapped(start)]
        log.info("[%s] restart=%d iter=0 lml=%.10g", stage, r, history[0])
        it_counter = [0]

        def callback(xk, _w=wrapped, _h=history, _r=r, _c=it_counter):
            _c[0] += 1
            val = -_w.lookup(xk)
            _h.append(val)
            log.info("[%s] restart=%d iter=%d lml=%.10g", stage, _r, _c[0], val)

        res = sopt.minimize(
            wrapped, start, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": config.max_iters, "ftol": config.tol},
            callback=callback,
        )
        total_evals += wrapped.n_evals
        value = -float(res.fun)
        log.info("[%s] restart=%d done lml=%.10g evals=%d", stage, r, value,
                 wrapped.n_evals)
        if best is None or value > best.value:
            best = OptResult(x=np.asarray(res.x, dtype=np.float64), value=value,
                             history=history, restart=r, n_evals=wrapped.n_evals)

    best.n_evals = total_evals
    if best.value <= -PENALTY * 0.5:
        raise NumericalError(f"[{stage}] all restarts failed to produce a valid objective")
    return best
