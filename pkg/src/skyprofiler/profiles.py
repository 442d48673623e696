"""Motion profiles and class hyper-parameters.

A motion profile is the per-object fingerprint: for each driving-force
channel (tangential xy, vertical z, angular theta) a spike-and-slab triple
(rate lambda, pulse mean mu, pulse variance sigma^2). A maneuverability
class is a distribution over profiles: per channel, the rate is Beta
distributed, the pulse precision 1/sigma^2 is Gamma distributed (shape-rate
parameterization), and the pulse mean given sigma^2 is Normal with variance
sigma^2 / shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError

CHANNELS = ("xy", "z", "theta")


@dataclass(frozen=True)
class ChannelProfile:
    """Spike-and-slab parameters of one force channel.

    n_effective and noise_var are optional estimation diagnostics filled by
    the profile extractor: the effective number of pulse samples behind the
    fit and the estimation-noise variance the fit had to see through. They
    stay None on exactly known profiles (e.g. generative draws), and
    downstream consumers treat None as fully reliable.
    """

    rate: float        # pulse activation probability, in [0, 1]
    mean: float        # pulse amplitude mean
    var: float         # pulse amplitude variance, > 0
    n_effective: float | None = None
    noise_var: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigError(f"rate must be in [0, 1], got {self.rate}")
        if self.var <= 0.0:
            raise ConfigError(f"var must be positive, got {self.var}")
        if self.n_effective is not None and not self.n_effective >= 0.0:
            raise ConfigError(
                f"n_effective must be non-negative, got {self.n_effective}")
        if self.noise_var is not None and not self.noise_var > 0.0:
            raise ConfigError(
                f"noise_var must be positive, got {self.noise_var}")


@dataclass(frozen=True)
class MotionProfile:
    """Per-object profile: one ChannelProfile per force channel."""

    object_id: int
    xy: ChannelProfile
    z: ChannelProfile
    theta: ChannelProfile

    def channel(self, name):
        if name not in CHANNELS:
            raise ConfigError(f"unknown channel {name!r}")
        return getattr(self, name)

    def with_object_id(self, object_id):
        return replace(self, object_id=int(object_id))


@dataclass(frozen=True)
class ChannelHyperParams:
    """Hyper-parameters generating one channel's profile parameters.

    beta_a, beta_b: Beta prior on the rate.
    gamma_alpha, gamma_beta: Gamma prior (shape, rate) on the pulse precision.
    normal_mean: center of the Normal prior on the pulse mean.
    shrinkage: prior strength; the pulse mean has variance var / shrinkage.
    """

    beta_a: float
    beta_b: float
    gamma_alpha: float
    gamma_beta: float
    normal_mean: float
    shrinkage: float

    def __post_init__(self):
        for name in ("beta_a", "beta_b", "gamma_alpha", "gamma_beta", "shrinkage"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")


@dataclass(frozen=True)
class ClassHyperParams:
    """One maneuverability class: hyper-parameters per channel."""

    class_id: int
    xy: ChannelHyperParams
    z: ChannelHyperParams
    theta: ChannelHyperParams

    def channel(self, name):
        if name not in CHANNELS:
            raise ConfigError(f"unknown channel {name!r}")
        return getattr(self, name)


# Inactive channel placeholder (2D mode): rate pinned to 0, tiny variance.
INACTIVE_VAR = 1e-9


def inactive_channel_profile():
    return ChannelProfile(rate=0.0, mean=0.0, var=INACTIVE_VAR)


def flat_channel_hyper():
    """Weak proper prior for a channel that carries no information (the
    vertical channel in 2D mode): uniform rate, unit-scale precision, zero
    mean center. Keeps every density finite if the channel is evaluated."""
    return ChannelHyperParams(
        beta_a=1.0, beta_b=1.0, gamma_alpha=1.0, gamma_beta=1.0,
        normal_mean=0.0, shrinkage=1.0,
    )


_flat_z_hyper = flat_channel_hyper


def _class_spec(class_id, beta_ab, gamma_ab, shrinkage, mean_xy=1.0, mean_theta=0.5):
    a, b = beta_ab
    alpha, beta = gamma_ab
    return ClassHyperParams(
        class_id=class_id,
        xy=ChannelHyperParams(a, b, alpha, beta, mean_xy, shrinkage),
        z=_flat_z_hyper(),
        theta=ChannelHyperParams(a, b, alpha, beta, mean_theta, shrinkage),
    )


def default_class_set():
    """The three built-in maneuverability classes, docile to agile.

    Class 1 maneuvers rarely (rate ~ 0.04) with broad pulse amplitudes,
    class 2 about half the time, class 3 almost every step with tightly
    concentrated amplitudes. The xy and theta channels share the rate and
    precision priors; pulse-mean centers are 1.0 m/s^2 (tangential) and
    0.5 rad/s^2 (angular).
    """
    return [
        _class_spec(1, (2.0, 50.0), (10.0, 10.0), 1.0),
        _class_spec(2, (4.0, 4.0), (2.0, 0.5), 2.0),
        _class_spec(3, (50.0, 2.0), (2.0, 0.1), 10.0),
    ]


def extended_class_set():
    """Four classes for the online-learning experiments: the default three
    plus a mid-rate, high-precision class."""
    return default_class_set() + [
        _class_spec(4, (10.0, 10.0), (40.0, 2.0), 4.0),
    ]


def novel_class():
    """A fifth profile family unseen by the default registry, used to probe
    new-class discovery. Distinct pulse-mean centers set it apart from
    class 4, which shares its rate range."""
    return _class_spec(5, (25.0, 25.0), (10.0, 10.0), 4.0,
                       mean_xy=2.5, mean_theta=-0.9)


DEFAULT_CONCENTRATION = 100.0


def fit_channel_hyper_params(rates, pulse_means, pulse_vars,
                             kappa=DEFAULT_CONCENTRATION, eps=1e-9):
    """Method-of-moments fit of one channel's hyper-parameters from member
    profiles: Beta from the rates, Gamma (shape-rate) from the pulse
    precisions, Normal center from the pulse means, shrinkage as the ratio
    of mean pulse variance to the spread of pulse means.

    Zero-spread rates or precisions make the moment equations singular; the
    fit then falls back to a concentration-kappa distribution pinned at the
    empirical mean.
    """
    rates = np.asarray(rates, dtype=float)
    pulse_means = np.asarray(pulse_means, dtype=float)
    pulse_vars = np.asarray(pulse_vars, dtype=float)

    lam_m = float(rates.mean())
    lam_v = float(rates.var())
    lam_pinned = float(np.clip(lam_m, 1e-6, 1.0 - 1e-6))
    common = (lam_m * (1.0 - lam_m) / lam_v - 1.0
              if lam_v > 0.0 and 0.0 < lam_m < 1.0 else 0.0)
    if common > 0.0:
        beta_a, beta_b = lam_m * common, (1.0 - lam_m) * common
    else:
        beta_a, beta_b = lam_pinned * kappa, (1.0 - lam_pinned) * kappa

    taus = 1.0 / pulse_vars
    tau_m = float(taus.mean())
    tau_v = float(taus.var())
    if tau_v > 1e-12 * tau_m ** 2:
        gamma_alpha, gamma_beta = tau_m ** 2 / tau_v, tau_m / tau_v
    else:
        gamma_alpha, gamma_beta = kappa, kappa / tau_m

    return ChannelHyperParams(
        beta_a=beta_a, beta_b=beta_b,
        gamma_alpha=gamma_alpha, gamma_beta=gamma_beta,
        normal_mean=float(pulse_means.mean()),
        shrinkage=float(pulse_vars.mean() / max(pulse_means.var(), eps)),
    )


def fit_class_hyper_params(profiles, class_id, channels=("xy", "theta"),
                           kappa=DEFAULT_CONCENTRATION):
    """Fit a full class from member profiles; channels outside ``channels``
    get the flat placeholder prior."""
    parts = {}
    for name in CHANNELS:
        if name in channels:
            chs = [p.channel(name) for p in profiles]
            parts[name] = fit_channel_hyper_params(
                [c.rate for c in chs], [c.mean for c in chs],
                [c.var for c in chs], kappa=kappa)
        else:
            parts[name] = flat_channel_hyper()
    return ClassHyperParams(class_id=int(class_id), **parts)


def profile_params_array(profiles, channels=("xy", "theta")):
    """Stack profiles into an (n, 3*len(channels)) array with columns
    (rate, mean, var) per channel, in channel order. The array codec used
    by the estimator-facing API."""
    rows = []
    for prof in profiles:
        row = []
        for name in channels:
            ch = prof.channel(name)
            row.extend([ch.rate, ch.mean, ch.var])
        rows.append(row)
    return np.asarray(rows, dtype=float)


def profiles_from_params_array(params, channels=("xy", "theta"), object_ids=None):
    """Inverse of profile_params_array; missing channels become inactive."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if params.shape[1] != 3 * len(channels):
        raise ConfigError(
            f"expected {3 * len(channels)} columns for channels {channels}, "
            f"got {params.shape[1]}")
    out = []
    for i, row in enumerate(params):
        parts = {name: inactive_channel_profile() for name in CHANNELS}
        for j, name in enumerate(channels):
            rate, mean, var = row[3 * j: 3 * j + 3]
            parts[name] = ChannelProfile(rate=float(rate), mean=float(mean),
                                         var=float(max(var, INACTIVE_VAR)))
        oid = i if object_ids is None else int(object_ids[i])
        out.append(MotionProfile(object_id=oid, **parts))
    return out
