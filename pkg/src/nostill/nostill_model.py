"""The 4-GP non-stationary model: three latent GPs over log length scales
plus the observation GP, trained jointly.

The latent length-scale fields are carried by a small set of m induced
locations. Each of the three latent GPs interpolates its log scale values
over the space-time domain with a compactly supported kernel and a
constant-mean prior at the mean log value, so extrapolation far from the
induced locations reverts to the geometric-mean scale. Only the latent
posterior means feed the observation kernel; the latent predictive
variance is discarded.

Everything trainable sits in one flat log-space vector: observation
amplitude and noise, the 3 m log scale values, and the latent GPs' own
hyperparameters. Training maximizes the observation GP's log marginal
likelihood through the whole stack.

The stationary baseline model and its training live here too; both model
classes expose the same planner-facing surface (cov / noise_var /
predict_raw / label).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from nostill import optimize
from nostill.gp_core import GPModel, NumericalError, log_marginal_likelihood, predict
from nostill.nonstationary_kernel import LatentLengthField, gram_nonstationary
from nostill.stationary_kernels import KernelSpec, gram_stationary, _as_points

log = logging.getLogger("nostill")

# The latent log-scale values are parameters, not noisy data; this noise
# floor exists only for numerical conditioning of the latent GPs.
LATENT_NOISE = 1e-6

MODEL_FORMAT = "nostill-model"
MODEL_VERSION = 1

LATENT_DIMS = ("x", "y", "t")


@dataclass(frozen=True)
class NostillParams:
    """All free parameters of the 4-GP model.

    latent_points is the (m, 3) array of induced locations; log_lbar_*
    hold the log latent length scales there. theta_lx/ly/lt are the
    latent GPs' kernel specs (compact-support family with their own
    amplitude and 3 length scales each).
    """

    sigma_f: float
    noise_var: float
    base_family: str
    sparse: bool
    latent_points: np.ndarray
    log_lbar_x: np.ndarray
    log_lbar_y: np.ndarray
    log_lbar_t: np.ndarray
    theta_lx: KernelSpec
    theta_ly: KernelSpec
    theta_lt: KernelSpec
    spatial_dim_p: int = 2
    ch2_overall_variance: bool = False

    def __post_init__(self):
        pts = _as_points(self.latent_points)
        object.__setattr__(self, "latent_points", pts)
        m = pts.shape[0]
        if m < 1:
            raise ValueError("need at least one latent location")
        for name in ("log_lbar_x", "log_lbar_y", "log_lbar_t"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (m,):
                raise ValueError(f"{name} must have length m={m}, got {v.shape}")
            if not np.all(np.isfinite(np.exp(v))) or not np.all(np.exp(v) > 0):
                raise ValueError(f"{name} maps to non-finite or non-positive scales")
            object.__setattr__(self, name, v)
        if self.base_family not in ("CH1", "CH2"):
            raise ValueError(f"base family must be CH1 or CH2, got {self.base_family!r}")

    @property
    def m(self):
        return self.latent_points.shape[0]

    def base_spec(self):
        return KernelSpec(
            family=self.base_family, sigma_f=self.sigma_f,
            spatial_dim_p=self.spatial_dim_p,
            ch2_overall_variance=self.ch2_overall_variance,
        )

    def latent_thetas(self):
        return (self.theta_lx, self.theta_ly, self.theta_lt)

    def log_lbars(self):
        return (self.log_lbar_x, self.log_lbar_y, self.log_lbar_t)

    def n_free_parameters(self):
        """2 observation hypers + 3m latent values + latent GP hypers;
        independent of the training set size."""
        latent_hypers = sum(1 + len(t.length_scales) for t in self.latent_thetas())
        return 2 + 3 * self.m + latent_hypers

    def to_dict(self):
        return {
            "sigma_f": self.sigma_f,
            "noise_var": self.noise_var,
            "base_family": self.base_family,
            "sparse": self.sparse,
            "spatial_dim_p": self.spatial_dim_p,
            "ch2_overall_variance": self.ch2_overall_variance,
            "latent_points": self.latent_points.tolist(),
            "log_lbar_x": self.log_lbar_x.tolist(),
            "log_lbar_y": self.log_lbar_y.tolist(),
            "log_lbar_t": self.log_lbar_t.tolist(),
            "theta_lx": self.theta_lx.to_dict(),
            "theta_ly": self.theta_ly.to_dict(),
            "theta_lt": self.theta_lt.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            sigma_f=float(d["sigma_f"]),
            noise_var=float(d["noise_var"]),
            base_family=d["base_family"],
            sparse=bool(d["sparse"]),
            latent_points=np.array(d["latent_points"], dtype=np.float64),
            log_lbar_x=np.array(d["log_lbar_x"], dtype=np.float64),
            log_lbar_y=np.array(d["log_lbar_y"], dtype=np.float64),
            log_lbar_t=np.array(d["log_lbar_t"], dtype=np.float64),
            theta_lx=KernelSpec.from_dict(d["theta_lx"]),
            theta_ly=KernelSpec.from_dict(d["theta_ly"]),
            theta_lt=KernelSpec.from_dict(d["theta_lt"]),
            spatial_dim_p=int(d.get("spatial_dim_p", 2)),
            ch2_overall_variance=bool(d.get("ch2_overall_variance", False)),
        )


def _stationary_closure(spec):
    def kernel(a, b, field_a=None, field_b=None):
        return gram_stationary(a, b, spec)
    return kernel


def infer_latent_field(params, targets):
    """Predict the latent length scales at arbitrary target points.

    One GP per dimension, trained on (latent_points, log scale values)
    with a constant-mean prior at the mean log value; returns exp of the
    posterior means (positive by construction). Latent predictive
    variance is intentionally discarded.
    """
    targets = _as_points(targets)
    scales = []
    for log_vals, theta in zip(params.log_lbars(), params.latent_thetas()):
        c = float(np.mean(log_vals))
        gp = GPModel(params.latent_points, log_vals - c,
                     _stationary_closure(theta), LATENT_NOISE)
        scales.append(np.exp(gp.predict_mean(targets) + c))
    return LatentLengthField(targets, *scales)


def _lml_arrays(params, points, values):
    field = infer_latent_field(params, points)
    def kernel(a, b, fa=None, fb=None):
        return gram_nonstationary(a, b, fa, fb, params.base_spec(), params.sparse)
    gp = GPModel(points, values, kernel, params.noise_var, field=field)
    return log_marginal_likelihood(gp)


def nostill_lml(params, data):
    """Log marginal likelihood of the full model on a dataset.

    Factorization failures come back as -inf so an optimizer can step
    away instead of crashing.
    """
    try:
        return _lml_arrays(params, data.points(), data.values())
    except NumericalError:
        return -np.inf


def _pack(params):
    vec = [math.log(params.sigma_f), math.log(params.noise_var)]
    for log_vals in params.log_lbars():
        vec.extend(log_vals)
    for theta in params.latent_thetas():
        vec.append(math.log(theta.sigma_f))
        vec.extend(math.log(l) for l in theta.length_scales)
    return np.array(vec, dtype=np.float64)


def _unpack(vec, template):
    m = template.m
    i = 0
    sigma_f = math.exp(vec[i]); i += 1
    noise_var = math.exp(vec[i]); i += 1
    lbars = []
    for _ in range(3):
        lbars.append(np.array(vec[i:i + m])); i += m
    thetas = []
    for theta in template.latent_thetas():
        sf = math.exp(vec[i]); i += 1
        nls = len(theta.length_scales)
        ls = tuple(math.exp(v) for v in vec[i:i + nls]); i += nls
        thetas.append(replace(theta, sigma_f=sf, length_scales=ls))
    return replace(
        template, sigma_f=sigma_f, noise_var=noise_var,
        log_lbar_x=lbars[0], log_lbar_y=lbars[1], log_lbar_t=lbars[2],
        theta_lx=thetas[0], theta_ly=thetas[1], theta_lt=thetas[2],
    )


def _median_spacing(coords):
    u = np.unique(coords)
    if u.size < 2:
        return 1.0
    gaps = np.diff(u)
    gaps = gaps[gaps > 0]
    return float(np.median(gaps)) if gaps.size else 1.0


def _extent(coords):
    span = float(np.max(coords) - np.min(coords))
    return span if span > 0 else 1.0


def initial_params(points, latent_points, base_family="CH2", sparse=False,
                   spatial_dim_p=2, ch2_overall_variance=False):
    """Scale-aware deterministic initialization.

    Log latent scales start at the per-dimension median nearest-neighbor
    spacing of the training points; the latent GPs' length scales at half
    the domain extent per dimension.
    """
    points = _as_points(points)
    latent_points = _as_points(latent_points)
    m = latent_points.shape[0]
    spacing = [_median_spacing(points[:, d]) for d in range(3)]
    half_extent = tuple(_extent(points[:, d]) / 2.0 for d in range(3))
    theta = KernelSpec(family="ESGP", sigma_f=1.0, length_scales=half_extent)
    return NostillParams(
        sigma_f=1.0, noise_var=0.1, base_family=base_family, sparse=sparse,
        latent_points=latent_points,
        log_lbar_x=np.full(m, math.log(spacing[0])),
        log_lbar_y=np.full(m, math.log(spacing[1])),
        log_lbar_t=np.full(m, math.log(spacing[2])),
        theta_lx=theta, theta_ly=theta, theta_lt=theta,
        spatial_dim_p=spatial_dim_p, ch2_overall_variance=ch2_overall_variance,
    )


class NostillModel:
    """A trained non-stationary model bound to its training data."""

    def __init__(self, params, train_data, history=None, label="nostill"):
        self.params = params
        self.train_data = train_data
        self.normalization = train_data.normalization
        self.train_points = train_data.points()
        self.train_values = train_data.values()
        self.history = list(history) if history is not None else []
        self.label = label
        self.train_field = infer_latent_field(params, self.train_points)
        self.gp = GPModel(self.train_points, self.train_values, self._kernel,
                          params.noise_var, field=self.train_field)

    def _kernel(self, a, b, field_a=None, field_b=None):
        if field_a is None:
            field_a = infer_latent_field(self.params, a)
        if field_b is None:
            field_b = infer_latent_field(self.params, b)
        return gram_nonstationary(a, b, field_a, field_b,
                                  self.params.base_spec(), self.params.sparse)

    @property
    def noise_var(self):
        return self.params.noise_var

    def lml(self):
        return log_marginal_likelihood(self.gp)

    def cov(self, a, b):
        """Prior covariance between two point sets (fields inferred)."""
        return self._kernel(a, b)

    def predict(self, x_star):
        """Posterior mean and covariance at new points, de-normalized back
        to original units when the training data was normalized."""
        x_star = _as_points(x_star)
        field_star = infer_latent_field(self.params, x_star)
        mu, cov = predict(self.gp, x_star, field_star)
        if self.normalization is not None:
            mean, std = self.normalization
            mu = mu * std + mean
            cov = cov * std * std
        return mu, cov

    def predict_raw(self, obs_points, obs_values, targets):
        """Predictive mean at `targets` conditioned on raw-unit
        observations (not the training set); used by the planner."""
        mean, std = self.normalization if self.normalization is not None else (0.0, 1.0)
        targets = _as_points(targets)
        obs_points = np.asarray(obs_points, dtype=np.float64).reshape(-1, 3)
        if obs_points.shape[0] == 0:
            return np.full(targets.shape[0], mean)
        vals = (np.asarray(obs_values, dtype=np.float64) - mean) / std
        gp = GPModel(obs_points, vals, self._kernel, self.noise_var,
                     field=infer_latent_field(self.params, obs_points))
        mu = gp.predict_mean(targets, infer_latent_field(self.params, targets))
        return mu * std + mean

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "nostill",
            "label": self.label,
            "params": self.params.to_dict(),
            "normalization": list(self.normalization) if self.normalization else None,
            "dataset_fingerprint": self.train_data.fingerprint(),
            "final_lml": self.lml(),
            "history": [float(v) for v in self.history],
        }


def predict_model(model, x_star):
    """Spec-surface alias for NostillModel.predict."""
    return model.predict(x_star)


def train(data, latent_points, config, base_family="CH2", sparse=False,
          spatial_dim_p=2, ch2_overall_variance=False, stage="train"):
    """Jointly maximize the model likelihood over all four GPs' parameters.

    Returns a NostillModel whose final lml is at least the lml at the
    deterministic initialization (restart 0 starts there).
    """
    points = data.points()
    values = data.values()
    init = initial_params(points, latent_points, base_family, sparse,
                          spatial_dim_p, ch2_overall_variance)

    def objective(vec):
        try:
            return _lml_arrays(_unpack(vec, init), points, values)
        except NumericalError:
            return -np.inf

    result = optimize.maximize(objective, _pack(init), config, stage=stage)
    best = _unpack(result.x, init)
    return NostillModel(best, data, history=result.history)


class StationaryModel:
    """Stationary space-time GP baseline with the same planner surface."""

    def __init__(self, spec, noise_var, train_data, history=None, label="stationary"):
        self.spec = spec
        self._noise_var = float(noise_var)
        self.train_data = train_data
        self.normalization = train_data.normalization
        self.history = list(history) if history is not None else []
        self.label = label
        self.gp = GPModel(train_data.points(), train_data.values(),
                          _stationary_closure(spec), self._noise_var)

    @property
    def noise_var(self):
        return self._noise_var

    def lml(self):
        return log_marginal_likelihood(self.gp)

    def cov(self, a, b):
        return gram_stationary(a, b, self.spec)

    def predict(self, x_star):
        mu, cov = predict(self.gp, _as_points(x_star))
        if self.normalization is not None:
            mean, std = self.normalization
            mu = mu * std + mean
            cov = cov * std * std
        return mu, cov

    def predict_raw(self, obs_points, obs_values, targets):
        mean, std = self.normalization if self.normalization is not None else (0.0, 1.0)
        targets = _as_points(targets)
        obs_points = np.asarray(obs_points, dtype=np.float64).reshape(-1, 3)
        if obs_points.shape[0] == 0:
            return np.full(targets.shape[0], mean)
        vals = (np.asarray(obs_values, dtype=np.float64) - mean) / std
        gp = GPModel(obs_points, vals, _stationary_closure(self.spec), self._noise_var)
        return gp.predict_mean(targets) * std + mean

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": "stationary",
            "label": self.label,
            "spec": self.spec.to_dict(),
            "noise_var": self._noise_var,
            "normalization": list(self.normalization) if self.normalization else None,
            "dataset_fingerprint": self.train_data.fingerprint(),
            "final_lml": self.lml(),
            "history": [float(v) for v in self.history],
        }


def stationary_lml(spec, noise_var, data):
    gp = GPModel(data.points(), data.values(), _stationary_closure(spec), noise_var)
    return log_marginal_likelihood(gp)


def train_stationary(data, config, family="CH2", spatial_dim_p=2,
                     ch2_overall_variance=False, stage="train-stationary"):
    """Fit the stationary baseline (amplitude, noise, 3 length scales)."""
    points = data.points()
    spacing = [_median_spacing(points[:, d]) for d in range(3)]
    x0 = np.log(np.array([1.0, 0.1] + spacing))

    def make_spec(vec):
        return KernelSpec(
            family=family, sigma_f=math.exp(vec[0]), spatial_dim_p=spatial_dim_p,
            length_scales=tuple(math.exp(v) for v in vec[2:5]),
            ch2_overall_variance=ch2_overall_variance,
        )

    def objective(vec):
        try:
            return stationary_lml(make_spec(vec), math.exp(vec[1]), data)
        except NumericalError:
            return -np.inf

    result = optimize.maximize(objective, x0, config, stage=stage)
    spec = make_spec(result.x)
    return StationaryModel(spec, math.exp(result.x[1]), data, history=result.history)


def save_model(model, path):
    """Versioned flat file; floats in shortest round-trip decimal form."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model_dict(path):
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path} is not a model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')!r}")
    return d


def rebuild_model(d, train_data):
    """Reconstruct a model object from its file dict plus the training data
    (verified against the stored dataset fingerprint)."""
    fp = train_data.fingerprint()
    if fp != d["dataset_fingerprint"]:
        raise ValueError(
            "training data does not match the model file fingerprint: "
            f"{fp} vs {d['dataset_fingerprint']}"
        )
    if d["kind"] == "nostill":
        return NostillModel(NostillParams.from_dict(d["params"]), train_data,
                            history=d.get("history"), label=d.get("label", "nostill"))
    if d["kind"] == "stationary":
        return StationaryModel(KernelSpec.from_dict(d["spec"]), d["noise_var"],
                               train_data, history=d.get("history"),
                               label=d.get("label", "stationary"))
    raise ValueError(f"unknown model kind {d['kind']!r}")
