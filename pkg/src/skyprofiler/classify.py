"""Bayesian assignment of motion profiles to maneuverability classes.

A class is a distribution over profiles (Beta rate, Gamma pulse precision,
Normal pulse mean); the class-conditional likelihood of an estimated profile
is the product of those densities over the active channels, treating the
profile estimate as an exact draw. Posteriors combine the likelihoods with
class priors (equal by default) in the log domain.

Estimated profiles are not exact draws, so two robustness rules temper the
evaluation. First, every per-term log density is floored: an estimate deep
in the tail of every class's prior (for example a pulse variance pinned at
the extraction floor, whose precision would otherwise be ranked purely by
prior tail decay rates) registers as uniformly implausible instead of
producing astronomically different tail masses. Second, when a profile
carries extraction diagnostics (n_effective, noise_var), coordinates the
extraction could not identify are skipped: a channel whose fitted slab
second moment sits below twice the estimation-noise floor contributes
nothing, and the precision density requires at least MIN_EFFECTIVE_PULSES
effective pulse samples (a variance estimated from fewer is wider than the
priors it would be compared against). Profiles without diagnostics (exact
draws) are always evaluated in full.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln, xlog1py, xlogy
from sklearn.base import BaseEstimator, ClassifierMixin

from .exceptions import ConfigError, NumericalError
from .profiles import (
    CHANNELS,
    INACTIVE_VAR,
    fit_class_hyper_params,
    profile_params_array,
)

RATE_CLAMP = 1e-9  # keeps the Beta density finite at rate estimates of 0 or 1
DENSITY_FLOOR = 1e-12  # per-term density floor; see module docstring
LOG_DENSITY_FLOOR = float(np.log(DENSITY_FLOOR))
MIN_SLAB_TO_NOISE = 2.0  # slab second moment must clear this multiple of the noise floor
MIN_EFFECTIVE_PULSES = 12.0  # pulse samples needed before the precision density counts


@dataclass(frozen=True)
class ClassPosterior:
    """Posterior over registry classes for one profile.

    probabilities and log_likelihoods align with class_ids; best_class is
    the argmax, ties resolved to the lowest class id.
    """

    probabilities: np.ndarray = field(repr=False)
    log_likelihoods: np.ndarray = field(repr=False)
    class_ids: np.ndarray
    best_class: int

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise NumericalError(
                "posterior probabilities must be non-negative and sum to 1")

    def probability_of(self, class_id):
        idx = np.flatnonzero(np.asarray(self.class_ids) == class_id)
        if len(idx) == 0:
            raise ConfigError(f"class {class_id} not in posterior")
        return float(self.probabilities[idx[0]])


def _log_beta_density(x, a, b):
    return xlogy(a - 1.0, x) + xlog1py(b - 1.0, -x) - betaln(a, b)


def _log_gamma_density(x, shape, rate):
    return (shape * np.log(rate) - gammaln(shape)
            + xlogy(shape - 1.0, x) - rate * x)


def _log_normal_density(x, mean, var):
    return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)


def _is_inactive(channel_profile):
    return (channel_profile.rate == 0.0 and channel_profile.mean == 0.0
            and channel_profile.var <= INACTIVE_VAR)


def active_channels(profile):
    """Channels carrying information: everything except the exact inactive
    placeholder (rate 0, mean 0, variance at the placeholder floor)."""
    return tuple(name for name in CHANNELS
                 if not _is_inactive(profile.channel(name)))


def _channel_log_likelihood_arrays(rates, means, variances, hyper):
    """Floored per-term log densities (Beta, Gamma, Normal) as a 3-tuple."""
    lam = np.clip(rates, RATE_CLAMP, 1.0 - RATE_CLAMP)
    tau = 1.0 / variances
    terms = (_log_beta_density(lam, hyper.beta_a, hyper.beta_b),
             _log_gamma_density(tau, hyper.gamma_alpha, hyper.gamma_beta),
             _log_normal_density(means, hyper.normal_mean,
                                 variances / hyper.shrinkage))
    return tuple(np.maximum(t, LOG_DENSITY_FLOOR) for t in terms)


def population_log_likelihoods(profiles, registry, channels=None):
    """Log-likelihood matrix of shape (n_profiles, n_classes), plus the
    class-id vector. channels=None detects the active channels from the
    first profile and applies that set to all. Per-object censoring of
    unidentified coordinates follows the module docstring.
    """
    profiles = list(profiles)
    registry = list(registry)
    if not registry:
        raise ConfigError("class registry is empty")
    if not profiles:
        return np.zeros((0, len(registry))), np.array(
            [h.class_id for h in registry], dtype=int)
    if channels is None:
        channels = active_channels(profiles[0])
    if not channels:
        raise ConfigError("no active channels to evaluate")

    matrix = np.zeros((len(profiles), len(registry)))
    for name in channels:
        chs = [p.channel(name) for p in profiles]
        rates = np.array([c.rate for c in chs])
        means = np.array([c.mean for c in chs])
        variances = np.array([c.var for c in chs])
        for arr in (rates, means, variances):
            bad = np.isnan(arr)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise NumericalError(
                    f"non-finite profile parameter on channel {name} for "
                    f"profile index {i} (object {profiles[i].object_id})")
        noise = np.array([np.nan if c.noise_var is None else c.noise_var
                          for c in chs])
        n_eff = np.array([np.inf if c.n_effective is None else c.n_effective
                          for c in chs])
        slab_power = means ** 2 + variances
        channel_ok = np.where(np.isnan(noise), True,
                              slab_power >= MIN_SLAB_TO_NOISE * noise)
        precision_ok = channel_ok & (n_eff >= MIN_EFFECTIVE_PULSES)
        for c, hyper in enumerate(registry):
            t_rate, t_prec, t_mean = _channel_log_likelihood_arrays(
                rates, means, variances, hyper.channel(name))
            contrib = (np.where(channel_ok, t_rate + t_mean, 0.0)
                       + np.where(precision_ok, t_prec, 0.0))
            bad = ~np.isfinite(contrib)
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise NumericalError(
                    f"non-finite class log-likelihood on channel {name} "
                    f"for profile index {i} (object "
                    f"{profiles[i].object_id}), class {hyper.class_id}")
            matrix[:, c] += contrib
    class_ids = np.array([h.class_id for h in registry], dtype=int)
    return matrix, class_ids


def profile_log_likelihood(profile, hyper, channels=None):
    """Class-conditional log density of one profile under one class."""
    matrix, _ = population_log_likelihoods([profile], [hyper],
                                           channels=channels)
    return float(matrix[0, 0])


def _normalized_priors(priors, n_classes):
    if priors is None:
        return np.full(n_classes, 1.0 / n_classes)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (n_classes,):
        raise ConfigError(
            f"priors must have one entry per class ({n_classes}), "
            f"got shape {priors.shape}")
    if np.any(priors < 0) or not np.all(np.isfinite(priors)):
        raise ConfigError("priors must be finite and non-negative")
    total = priors.sum()
    if total <= 0:
        raise ConfigError("priors must have positive total mass")
    return priors / total


def posterior_from_log_likelihoods(log_likelihoods, class_ids, priors=None):
    """Normalize per-class log-likelihoods into a ClassPosterior via
    log-sum-exp; exact posterior ties resolve to the lowest class id."""
    lls = np.asarray(log_likelihoods, dtype=float)
    ids = np.asarray(class_ids, dtype=int)
    prior = _normalized_priors(priors, len(lls))
    with np.errstate(divide="ignore"):
        log_post = lls + np.log(prior)
    shifted = log_post - np.max(log_post)
    weights = np.exp(shifted)
    probs = weights / weights.sum()
    winners = np.flatnonzero(probs == probs.max())
    best = int(ids[winners].min())
    return ClassPosterior(probabilities=probs, log_likelihoods=lls,
                          class_ids=ids, best_class=best)


def classify(profile, registry, priors=None, channels=None):
    """Posterior over registry classes for one profile (equal priors unless
    given; priors are normalized internally)."""
    matrix, ids = population_log_likelihoods([profile], registry,
                                             channels=channels)
    return posterior_from_log_likelihoods(matrix[0], ids, priors=priors)


def classify_population(profiles, registry, priors=None, channels=None):
    """classify() over many profiles with one vectorized likelihood pass."""
    matrix, ids = population_log_likelihoods(profiles, registry,
                                             channels=channels)
    return [posterior_from_log_likelihoods(row, ids, priors=priors)
            for row in matrix]


class ProfileClassifier(ClassifierMixin, BaseEstimator):
    """Generative classifier over motion profiles.

    X is either a sequence of MotionProfile objects (extraction diagnostics
    are honored, enabling the censoring rules) or an array of
    (rate, mean, var) rows per channel in ``channels`` order (the
    profile_params_array codec, exact-draw semantics). fit() learns
    per-class hyper-parameters by method of moments from the labeled
    profiles; predict() assigns by Bayesian posterior with equal priors.
    """

    def __init__(self, channels=("xy", "theta"), kappa=100.0):
        self.channels = channels
        self.kappa = kappa

    def _profiles_from_rows(self, X):
        from .profiles import MotionProfile, profiles_from_params_array
        if len(X) > 0 and all(isinstance(p, MotionProfile) for p in X):
            return len(self.channels) * 3, list(X)
        X = np.asarray(X, dtype=float)
        expected = 3 * len(self.channels)
        if X.ndim != 2 or X.shape[1] != expected:
            raise ConfigError(
                f"expected MotionProfile objects or rows of {expected} "
                f"profile parameters, got shape {X.shape}")
        return X.shape[1], profiles_from_params_array(X, channels=self.channels)

    def fit(self, X, y):
        n_features, profiles = self._profiles_from_rows(X)
        y = np.asarray(y)
        if len(y) != len(profiles):
            raise ConfigError("X and y must have equal length")
        self.classes_ = np.unique(y)
        self.hyper_params_ = [
            fit_class_hyper_params(
                [p for p, label in zip(profiles, y) if label == cls],
                class_id=int(cls), channels=self.channels, kappa=self.kappa)
            for cls in self.classes_
        ]
        self.n_features_in_ = n_features
        return self

    def _posteriors(self, X):
        _, profiles = self._profiles_from_rows(X)
        matrix, ids = population_log_likelihoods(
            profiles, self.hyper_params_, channels=self.channels)
        return matrix, ids

    def profile_posteriors(self, X):
        """Full ClassPosterior per input profile."""
        matrix, ids = self._posteriors(X)
        return [posterior_from_log_likelihoods(row, ids) for row in matrix]

    def predict(self, X):
        matrix, ids = self._posteriors(X)
        return np.array([
            posterior_from_log_likelihoods(row, ids).best_class
            for row in matrix])

    def predict_proba(self, X):
        matrix, ids = self._posteriors(X)
        return np.vstack([
            posterior_from_log_likelihoods(row, ids).probabilities
            for row in matrix])

    def predict_log_proba(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self.predict_proba(X))
