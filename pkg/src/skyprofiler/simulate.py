"""Synthetic trajectory generation.

Objects are simulated in three layers: class hyper-parameters generate a
per-object motion profile; the profile generates a sparse spike-and-slab
driving-force sequence per channel; the forces drive the linear state
equation with process noise, and noisy position observations are emitted
with a per-step availability probability (the update rate r).

All sampling is seeded. A population derives per-object seeds as
``seed + object_id`` so results do not depend on generation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError
from .kinematics import (
    HEADING_EPSILON,
    DrivingForce,
    Observation,
    StateVector,
    SystemModel,
    force_to_velocity_delta,
)
from .profiles import (
    CHANNELS,
    ChannelProfile,
    ClassHyperParams,
    MotionProfile,
    inactive_channel_profile,
)

DEFAULT_INITIAL_POSITION = (0.0, 0.0, 0.0)
DEFAULT_INITIAL_VELOCITY = (10.0, 0.0, 0.0)


@dataclass(frozen=True)
class SynthTrajectory:
    """A simulated object: ground truth plus its observation stream.

    states has length n+1 (k = 0..n); polar_forces and cartesian_inputs have
    length n (the input applied on the transition k -> k+1 sits at index k);
    observations are aligned 1:1 with states after the initial one
    (timestep_index 1..n).
    """

    states: tuple
    polar_forces: np.ndarray       # (n, 3) columns xy, z, theta
    cartesian_inputs: np.ndarray   # (n, 3) velocity increments
    observations: tuple
    true_class: int
    profile: MotionProfile

    def __len__(self):
        return len(self.states)


def sample_profile(hyper, object_id, rng_seed, mode_2d=True):
    """Draw one object's MotionProfile from its class hyper-parameters.

    Per channel: rate ~ Beta(a, b); precision ~ Gamma(shape, rate) giving
    var = 1/precision; mean ~ Normal(normal_mean, var / shrinkage). The z
    channel is forced inactive in 2D mode.
    """
    rng = np.random.default_rng(rng_seed)
    parts = {}
    for name in CHANNELS:
        if mode_2d and name == "z":
            parts[name] = inactive_channel_profile()
            continue
        ch = hyper.channel(name)
        rate = float(rng.beta(ch.beta_a, ch.beta_b))
        precision = float(rng.gamma(ch.gamma_alpha, 1.0 / ch.gamma_beta))
        var = 1.0 / max(precision, 1e-12)
        mean = float(rng.normal(ch.normal_mean, math.sqrt(var / ch.shrinkage)))
        parts[name] = ChannelProfile(rate=rate, mean=mean, var=var)
    return MotionProfile(object_id=int(object_id), **parts)


def sample_driving_forces(profile, length, rng_seed):
    """Spike-and-slab force sequence, shape (length, 3), columns xy/z/theta.

    Each step and channel independently fires a pulse with probability
    ``rate``; amplitudes are Normal(mean, var). Non-pulse steps are exactly
    zero.
    """
    if length < 0:
        raise ConfigError("length must be non-negative")
    rng = np.random.default_rng(rng_seed)
    out = np.zeros((length, 3))
    for j, name in enumerate(CHANNELS):
        ch = profile.channel(name)
        if ch.rate == 0.0:
            continue
        fires = rng.random(length) < ch.rate
        amplitudes = rng.normal(ch.mean, math.sqrt(ch.var), size=length)
        out[:, j] = np.where(fires, amplitudes, 0.0)
    return out


def synthesize(profile, model, length, observation_rate=1.0, initial_state=None,
               rng_seed=0, true_class=0, mode_2d=True):
    """Simulate one object for ``length`` steps.

    Draw order is fixed (forces, then per-step process noise, then
    observation noise and availability) so a seed pins the trajectory
    byte-for-byte. In 2D mode the z components of the process noise are
    zeroed along with the z force channel, keeping the motion exactly
    planar; observations keep their full 3D noise.
    """
    if not 0.0 <= observation_rate <= 1.0:
        raise ConfigError(f"observation_rate must be in [0, 1], got {observation_rate}")
    if length < 1:
        raise ConfigError("length must be >= 1")
    if initial_state is None:
        initial_state = StateVector(
            np.array(DEFAULT_INITIAL_POSITION), np.array(DEFAULT_INITIAL_VELOCITY), 0)

    rng = np.random.default_rng(rng_seed)
    forces = sample_driving_forces(profile, length, rng.integers(2**63))

    process_cov = model.process_noise_cov
    process_noise = _sample_gaussian(rng, process_cov, length)
    if mode_2d:
        process_noise[:, 2] = 0.0
        process_noise[:, 5] = 0.0
    meas_noise = _sample_gaussian(rng, model.measurement_noise_cov, length)
    available = rng.random(length) < observation_rate

    states = [initial_state]
    cart_inputs = np.zeros((length, 3))
    observations = []
    heading = None
    state = initial_state
    for k in range(length):
        force = DrivingForce(*forces[k])
        if math.hypot(state.velocity[0], state.velocity[1]) >= HEADING_EPSILON:
            heading = math.atan2(state.velocity[1], state.velocity[0])
        delta_v = force_to_velocity_delta(state.velocity, force, model.dt,
                                          prev_heading=heading)
        cart_inputs[k] = delta_v
        x = (model.transition @ state.as_vector()
             + model.input_gain @ delta_v + process_noise[k])
        state = StateVector.from_vector(x, k + 1)
        states.append(state)
        observations.append(Observation(
            position_reading=state.position + meas_noise[k],
            valid=bool(available[k]),
            timestep_index=k + 1,
        ))
    return SynthTrajectory(
        states=tuple(states),
        polar_forces=forces,
        cartesian_inputs=cart_inputs,
        observations=tuple(observations),
        true_class=int(true_class),
        profile=profile,
    )


def _sample_gaussian(rng, cov, n):
    """n draws from N(0, cov) via the diagonal fast path or a Cholesky-like
    factor for general covariances."""
    dim = cov.shape[0]
    if np.allclose(cov, np.diag(np.diag(cov))):
        std = np.sqrt(np.diag(cov))
        return rng.standard_normal((n, dim)) * std
    # eigh factor tolerates PSD (singular) covariances
    w, v = np.linalg.eigh(cov)
    factor = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
    return rng.standard_normal((n, dim)) @ factor.T


def generate_population(class_specs, counts, model, length, observation_rate=1.0,
                        rng_seed=0, mode_2d=True, initial_state=None):
    """Simulate ``counts[i]`` objects of each class in ``class_specs``.

    Object ids run 0..N-1 in class order; each object's randomness comes
    from ``rng_seed + object_id`` (profile and trajectory both), so any
    subset regenerates identically.
    """
    if len(class_specs) != len(counts):
        raise ConfigError("class_specs and counts must have equal length")
    population = []
    object_id = 0
    for spec, count in zip(class_specs, counts):
        for _ in range(count):
            seed = rng_seed + object_id
            profile = sample_profile(spec, object_id, seed, mode_2d=mode_2d)
            # distinct stream for the trajectory itself
            traj = synthesize(profile, model, length, observation_rate,
                              initial_state=initial_state,
                              rng_seed=seed + 0x5EED, true_class=spec.class_id,
                              mode_2d=mode_2d)
            population.append(traj)
            object_id += 1
    return population
