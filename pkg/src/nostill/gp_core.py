"""Generic GP machinery: factorization, marginal likelihood, prediction,
posterior entropy.

A kernel here is any callable ``kernel(A, B, field_a=None, field_b=None)``
returning the covariance matrix between two (n, 3) point arrays; the field
arguments are ignored by stationary kernels. GPModel factorizes once and
is immutable afterwards, so concurrent predict calls are safe.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla

log = logging.getLogger("nostill")

LOG_2PI = float(np.log(2.0 * np.pi))

# Jitter policy: start at 1e-10 * trace/n, escalate x10 up to 1e-4 * trace/n.
JITTER_START = 1e-10
JITTER_MAX = 1e-4


class NumericalError(Exception):
    """Factorization or optimization failed beyond recovery."""


def chol_with_jitter(K):
    """Lower Cholesky factor of K plus the smallest admissible jitter.

    Returns (L, jitter). Raises NumericalError if K is non-finite or still
    not positive definite at the jitter cap.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if not np.all(np.isfinite(K)):
        raise NumericalError("covariance matrix contains non-finite entries")
    scale = float(np.trace(K)) / n
    if not np.isfinite(scale) or scale <= 0:
        raise NumericalError(f"covariance trace/n = {scale!r} is not positive")
    jitter = JITTER_START * scale
    limit = JITTER_MAX * scale
    while True:
        try:
            L = sla.cholesky(K + jitter * np.eye(n), lower=True)
            return L, jitter
        except sla.LinAlgError:
            jitter *= 10.0
            if jitter > limit * (1.0 + 1e-12):
                raise NumericalError(
                    f"Cholesky failed up to jitter {limit:.3e} (trace/n = {scale:.3e})"
                )
            log.debug("[gp] escalating jitter to %.3e", jitter)


def _logdet_with_floor(M, ref_scale):
    """log|M| for a symmetric PSD-up-to-roundoff matrix.

    Escalates a jitter floor from 1e-12 * ref_scale up to 1e-2 * ref_scale
    so that degenerate posteriors (entropy heading to -inf) return a very
    negative but finite value instead of failing.
    """
    M = np.asarray(M, dtype=np.float64)
    if not np.all(np.isfinite(M)):
        raise NumericalError("posterior covariance contains non-finite entries")
    n = M.shape[0]
    try:
        L = sla.cholesky(M, lower=True)
        return 2.0 * float(np.sum(np.log(np.diag(L))))
    except sla.LinAlgError:
        pass
    ref = max(float(ref_scale), np.finfo(float).tiny)
    jitter = 1e-12 * ref
    while jitter <= 1e-2 * ref * (1.0 + 1e-12):
        try:
            L = sla.cholesky(M + jitter * np.eye(n), lower=True)
            return 2.0 * float(np.sum(np.log(np.diag(L))))
        except sla.LinAlgError:
            jitter *= 10.0
    raise NumericalError("posterior covariance is not PSD even at the jitter floor")


class GPModel:
    """A GP conditioned on (points, values) through a kernel closure.

    noise_var is the observational noise variance added to the diagonal.
    The Cholesky factor of K(X, X) + noise_var * I (+ jitter) is cached at
    construction.
    """

    def __init__(self, points, values, kernel, noise_var, field=None):
        if noise_var < 0:
            raise ValueError(f"noise_var must be >= 0, got {noise_var!r}")
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.shape != (self.points.shape[0],):
            raise ValueError("values must be a vector matching points")
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.field = field
        K = kernel(self.points, self.points, field, field)
        Ky = K + self.noise_var * np.eye(len(self.values))
        self.chol, self.jitter = chol_with_jitter(Ky)
        self.alpha = sla.cho_solve((self.chol, True), self.values)

    def __len__(self):
        return len(self.values)

    def predict_mean(self, x_star, field_star=None):
        """Posterior mean only; skips the covariance solve."""
        k_star = self.kernel(np.ascontiguousarray(x_star, dtype=np.float64),
                             self.points, field_star, self.field)
        return k_star @ self.alpha


def log_marginal_likelihood(model):
    """-1/2 y' Ky^-1 y - 1/2 log|Ky| - n/2 log(2 pi), via the cached factor."""
    n = len(model)
    quad = float(model.values @ model.alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(model.chol))))
    return -0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI


def predict(model, x_star, field_star=None):
    """Posterior mean and covariance at new points.

    The covariance is symmetrized but returned raw: tiny negative
    diagonal entries from roundoff are kept for diagnostics. Use
    ``clamped_variances`` for reporting.
    """
    x_star = np.ascontiguousarray(x_star, dtype=np.float64)
    k_star = model.kernel(x_star, model.points, field_star, model.field)
    mu = k_star @ model.alpha
    v = sla.solve_triangular(model.chol, k_star.T, lower=True)
    cov = model.kernel(x_star, x_star, field_star, field_star) - v.T @ v
    cov = (cov + cov.T) / 2.0
    return mu, cov


def clamped_variances(cov):
    """Predictive variances with roundoff negatives clamped to zero."""
    return np.clip(np.diag(cov), 0.0, None)


def posterior_logdet(C, remaining_idx, conditioned_idx, noise_var=0.0):
    """log-determinant of the posterior covariance of a subset of indices
    of a joint covariance matrix C, conditioned on another subset.

    noise_var is added to the conditioning block's diagonal (observations
    enter as noisy). With an empty conditioning set this is the prior
    log-determinant. Proportional to the Gaussian entropy of the
    remaining set; the dropped constants cancel in greedy comparisons.
    """
    C = np.asarray(C, dtype=np.float64)
    r = np.asarray(remaining_idx, dtype=np.intp)
    s = np.asarray(conditioned_idx, dtype=np.intp)
    if r.size == 0:
        raise ValueError("remaining set is empty")
    K_rr = C[np.ix_(r, r)]
    ref = float(np.mean(np.diag(K_rr)))
    if s.size == 0:
        return _logdet_with_floor(K_rr, ref)
    K_ss = C[np.ix_(s, s)] + noise_var * np.eye(s.size)
    K_rs = C[np.ix_(r, s)]
    L, _ = chol_with_jitter(K_ss)
    w = sla.solve_triangular(L, K_rs.T, lower=True)
    M = K_rr - w.T @ w
    M = (M + M.T) / 2.0
    return _logdet_with_floor(M, ref)


def posterior_entropy(model, remaining, conditioned, field_remaining=None,
                      field_conditioned=None):
    """Entropy (up to additive constants) of the model's posterior over
    `remaining` points conditioned on noisy observations at `conditioned`.

    An empty conditioning set gives the prior entropy. `model` needs only
    a kernel closure and noise_var, so any GPModel-shaped object works.
    """
    remaining = np.ascontiguousarray(remaining, dtype=np.float64)
    K_rr = model.kernel(remaining, remaining, field_remaining, field_remaining)
    ref = float(np.mean(np.diag(K_rr)))
    conditioned = np.ascontiguousarray(conditioned, dtype=np.float64)
    if conditioned.size == 0:
        return _logdet_with_floor(K_rr, ref)
    K_cc = model.kernel(conditioned, conditioned, field_conditioned, field_conditioned)
    K_cc = K_cc + model.noise_var * np.eye(conditioned.shape[0])
    K_rc = model.kernel(remaining, conditioned, field_remaining, field_conditioned)
    L, _ = chol_with_jitter(K_cc)
    w = sla.solve_triangular(L, K_rc.T, lower=True)
    M = K_rr - w.T @ w
    M = (M + M.T) / 2.0
    return _logdet_with_floor(M, ref)
