"""Constrained two-component Gaussian mixture fitting for force samples.

Each motion channel's estimated force series is modeled as a spike-and-slab
draw blurred by estimation noise: with probability 1-lambda a sample is pure
noise N(0, noise_var); with probability lambda it carries a pulse, giving
N(mu, var + noise_var). The spike component is FIXED (zero mean, known
noise variance from the filter); EM estimates (lambda, mu, var) per channel.

One vectorized kernel fits many objects simultaneously (rows = objects,
padded with zero weights); the single-channel entry point is a 1-row batch,
so both paths share every numerical detail.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConfigError, InsufficientDataError
from .profiles import (
    ChannelProfile,
    MotionProfile,
    inactive_channel_profile,
)

VARIANCE_FLOOR = 1e-9
MIN_SAMPLES = 10
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500
_RATE_EPS = 1e-12  # open-interval clamp for the mixing weight inside EM
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MixtureFit:
    """Point estimate of one channel's pulse behavior.

    pulse_var is the latent pulse-amplitude variance (the fitted slab
    variance minus the fixed noise variance, floored); log_likelihood is
    the final value, with the per-iteration trace kept for diagnostics.
    """

    pulse_prob: float
    pulse_mean: float
    pulse_var: float
    noise_var: float
    log_likelihood: float
    iterations: int
    converged: bool
    log_likelihood_trace: np.ndarray = field(repr=False)


def fit_channel(samples, noise_var, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Fit the constrained mixture to one channel's force samples.

    Requires at least MIN_SAMPLES finite samples and noise_var > 0. An
    all-zero sample set returns the degenerate no-pulse fit rather than
    erroring.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(samples)):
        raise ConfigError("force samples must be finite")
    if len(samples) < MIN_SAMPLES:
        raise InsufficientDataError(
            f"need at least {MIN_SAMPLES} force samples, got {len(samples)}")
    if not noise_var > 0:
        raise ConfigError(f"noise_var must be positive, got {noise_var}")
    rates, means, vars_, logliks, iters, conv, traces = _em_batch(
        samples[np.newaxis, :],
        np.ones((1, len(samples)), dtype=bool),
        np.array([float(noise_var)]),
        tol, max_iter)
    return MixtureFit(
        pulse_prob=float(rates[0]),
        pulse_mean=float(means[0]),
        pulse_var=float(vars_[0]),
        noise_var=float(noise_var),
        log_likelihood=float(logliks[0]),
        iterations=int(iters[0]),
        converged=bool(conv[0]),
        log_likelihood_trace=traces[0],
    )


def _log_normal(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _em_batch(samples, weights, noise_var, tol, max_iter):
    """Vectorized EM over a batch of channels.

    samples: (B, M) padded sample matrix; weights: (B, M) boolean validity;
    noise_var: (B,) fixed spike variances. Rows are fully independent, so a
    1-row batch reproduces the scalar path exactly.

    Returns (rates, means, vars, logliks, iterations, converged, traces)
    with traces a list of per-row log-likelihood arrays.
    """
    b, _ = samples.shape
    w = weights.astype(float)
    counts = w.sum(axis=1)
    s_n = noise_var[:, np.newaxis]

    # degenerate rows: every valid sample exactly zero -> no-pulse fit
    degenerate = ~np.any((samples != 0.0) & weights, axis=1)

    # moment warm start from the samples beyond twice the noise deviation
    thr = 2.0 * np.sqrt(noise_var)[:, np.newaxis]
    hi = (np.abs(samples) > thr) & weights
    n_hi = hi.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = n_hi / counts
        hi_w = hi.astype(float)
        hi_mean = np.where(n_hi > 0,
                           (samples * hi_w).sum(axis=1) / np.maximum(n_hi, 1),
                           (samples * w).sum(axis=1) / counts)
        hi_m2 = (hi_w * (samples - hi_mean[:, np.newaxis]) ** 2).sum(axis=1)
        hi_var = np.where(n_hi > 1, hi_m2 / np.maximum(n_hi, 1), 0.0)
        all_m2 = (w * (samples - (samples * w).sum(axis=1)[:, np.newaxis]
                       / counts[:, np.newaxis]) ** 2).sum(axis=1) / counts
    rate = np.clip(frac, 1.0 / counts, 1.0 - 1.0 / counts)
    mean = hi_mean
    var = np.maximum(np.where(n_hi > 1, hi_var, all_m2) - noise_var,
                     VARIANCE_FLOOR)

    active = ~degenerate
    loglik = np.full(b, -np.inf)
    iterations = np.zeros(b, dtype=int)
    converged = degenerate.copy()
    trace_rows = [[] for _ in range(b)]

    for _ in range(max_iter):
        if not active.any():
            break
        lam = np.clip(rate[:, np.newaxis], _RATE_EPS, 1.0 - _RATE_EPS)
        log_slab = (_log_normal(samples, mean[:, np.newaxis],
                                var[:, np.newaxis] + s_n) + np.log(lam))
        log_spike = _log_normal(samples, 0.0, s_n) + np.log(1.0 - lam)
        log_norm = np.logaddexp(log_slab, log_spike)
        ll = np.where(active, (log_norm * w).sum(axis=1), loglik)

        resp = np.exp(log_slab - log_norm) * w
        n_slab = resp.sum(axis=1)
        new_rate = n_slab / counts
        safe = n_slab > 1e-300
        new_mean = np.where(
            safe, (resp * samples).sum(axis=1) / np.maximum(n_slab, 1e-300), mean)
        new_var = np.where(
            safe,
            (resp * (samples - new_mean[:, np.newaxis]) ** 2).sum(axis=1)
            / np.maximum(n_slab, 1e-300) - noise_var,
            var)
        new_var = np.maximum(new_var, VARIANCE_FLOOR)

        improved = ll - loglik
        just_converged = active & (improved < tol)
        for i in np.flatnonzero(active):
            trace_rows[i].append(ll[i])
        iterations[active] += 1
        rate = np.where(active & ~just_converged, new_rate, rate)
        mean = np.where(active & ~just_converged, new_mean, mean)
        var = np.where(active & ~just_converged, new_var, var)
        loglik = ll
        converged = converged | just_converged
        active = active & ~just_converged

    # degenerate rows: rate 0, mean 0, var at the floor, exact likelihood
    if degenerate.any():
        rate = np.where(degenerate, 0.0, rate)
        mean = np.where(degenerate, 0.0, mean)
        var = np.where(degenerate, VARIANCE_FLOOR, var)
        loglik = np.where(
            degenerate,
            -0.5 * counts * (_LOG_2PI + np.log(noise_var)),
            loglik)
    traces = [
        np.array(t) if t else np.array([loglik[i]])
        for i, t in enumerate(trace_rows)]
    return rate, mean, var, loglik, iterations, converged, traces


def _channel_fit_to_profile(rate, mean, var, n_samples, noise_var):
    rate = float(np.clip(rate, 0.0, 1.0))
    return ChannelProfile(rate=rate,
                          mean=float(mean),
                          var=float(max(var, VARIANCE_FLOOR)),
                          n_effective=rate * float(n_samples),
                          noise_var=float(noise_var))


def extract_profile(estimated, noise_vars=None, mode_2d=True, object_id=-1,
                    tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Fit per-channel mixtures to an estimated trajectory's valid force
    samples and assemble the motion profile.

    noise_vars defaults to the trajectory's own per-channel noise-floor
    estimate. In 2D mode the vertical channel is reported inactive without
    fitting.
    """
    nv = dict(estimated.noise_vars if noise_vars is None else noise_vars)
    channels = {}
    for name in ("xy", "theta") + (() if mode_2d else ("z",)):
        samples = estimated.valid_force_samples(name)
        fit = fit_channel(samples, nv[name], tol=tol, max_iter=max_iter)
        channels[name] = _channel_fit_to_profile(
            fit.pulse_prob, fit.pulse_mean, fit.pulse_var,
            len(samples), nv[name])
    if mode_2d:
        channels["z"] = inactive_channel_profile()
    return MotionProfile(object_id=int(object_id), xy=channels["xy"],
                         z=channels["z"], theta=channels["theta"])


def extract_population_profiles(estimates, object_ids=None, mode_2d=True,
                                tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Batched extract_profile over a population of estimated trajectories.

    All objects' channels fit in one vectorized EM per channel (rows padded
    to the longest sample count); results match the per-object path.
    """
    estimates = list(estimates)
    if object_ids is None:
        object_ids = range(len(estimates))
    object_ids = [int(i) for i in object_ids]
    if len(object_ids) != len(estimates):
        raise ConfigError("object_ids length must match estimates")
    if not estimates:
        return []

    names = ("xy", "theta") + (() if mode_2d else ("z",))
    per_channel = {}
    for name in names:
        rows = [est.valid_force_samples(name) for est in estimates]
        lengths = [len(r) for r in rows]
        short = [i for i, n in enumerate(lengths) if n < MIN_SAMPLES]
        if short:
            raise InsufficientDataError(
                f"need at least {MIN_SAMPLES} force samples on channel "
                f"{name}; objects {short} fall short")
        width = max(lengths)
        samples = np.zeros((len(rows), width))
        weights = np.zeros((len(rows), width), dtype=bool)
        for i, r in enumerate(rows):
            samples[i, :len(r)] = r
            weights[i, :len(r)] = True
        if not np.all(np.isfinite(samples)):
            raise ConfigError("force samples must be finite")
        noise = np.array([float(est.noise_vars[name]) for est in estimates])
        if not np.all(noise > 0):
            raise ConfigError("noise_var must be positive for every object")
        rates, means, vars_, *_ = _em_batch(samples, weights, noise, tol, max_iter)
        per_channel[name] = (rates, means, vars_, lengths, noise)

    profiles = []
    for i, oid in enumerate(object_ids):
        chans = {
            name: _channel_fit_to_profile(
                per_channel[name][0][i], per_channel[name][1][i],
                per_channel[name][2][i], per_channel[name][3][i],
                per_channel[name][4][i])
            for name in names}
        if mode_2d:
            chans["z"] = inactive_channel_profile()
        profiles.append(MotionProfile(object_id=oid, xy=chans["xy"],
                                      z=chans["z"], theta=chans["theta"]))
    return profiles


class SpikeSlabMixture(BaseEstimator):
    """Estimator wrapper around fit_channel for one sample vector.

    Parameters mirror fit_channel; fitted attributes expose the mixture
    point estimate (pulse_prob_, pulse_mean_, pulse_var_), the final
    log-likelihood, and the iteration count.
    """

    def __init__(self, noise_var=1.0, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
        self.noise_var = noise_var
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        x = np.asarray(X, dtype=float)
        if x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        if x.ndim != 1:
            raise ConfigError("expected a single column of force samples")
        result = fit_channel(x, self.noise_var, tol=self.tol,
                             max_iter=self.max_iter)
        self.pulse_prob_ = result.pulse_prob
        self.pulse_mean_ = result.pulse_mean
        self.pulse_var_ = result.pulse_var
        self.log_likelihood_ = result.log_likelihood
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        return self

    def score(self, X, y=None):
        """Average per-sample log-likelihood under the fitted mixture."""
        x = np.asarray(X, dtype=float).ravel()
        lam = np.clip(self.pulse_prob_, _RATE_EPS, 1.0 - _RATE_EPS)
        log_slab = _log_normal(x, self.pulse_mean_,
                               self.pulse_var_ + self.noise_var) + np.log(lam)
        log_spike = _log_normal(x, 0.0, self.noise_var) + np.log(1.0 - lam)
        return float(np.mean(np.logaddexp(log_slab, log_spike)))
