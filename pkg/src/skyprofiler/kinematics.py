"""Kinematic state-space model for flying-object motion.

The state is a 6-vector [px, py, pz, vx, vy, vz]. One discrete step is

    x(k+1) = A x(k) + F a(k) + w(k)
    z(k)   = H x(k) + zeta(k)

where A integrates position with the constant-velocity model, F routes the
(unknown) driving input a(k) into the velocity components, and H reads out
position only. Process noise w has covariance ``process_noise_cov`` (6x6),
measurement noise zeta has covariance ``measurement_noise_cov`` (3x3).

The driving input has a natural polar decomposition in the horizontal plane:
a tangential component along the heading, an angular component that rotates
the heading, and a vertical component. ``force_to_velocity_delta`` converts a
polar force into the Cartesian velocity increment that the linear state
equation consumes; the conversion is norm-preserving (a pure angular force
turns the velocity without changing speed).

Convention: with F = [0 I]^T the Cartesian input is the per-step velocity
increment. At dt=1 (the default everywhere) it coincides numerically with an
acceleration; all polar force channels are expressed in per-second units and
scaled by dt inside the conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

# Below this horizontal speed the heading is numerically meaningless and is
# carried over from the previous step instead of computed.
HEADING_EPSILON = 1e-6


def wrap_angle(theta):
    """Wrap an angle (scalar or array) to the interval (-pi, pi]."""
    wrapped = np.asarray(-((-np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi))
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class StateVector:
    """Position/velocity state at one timestep.

    Attributes:
        position: length-3 array [px, py, pz] in meters.
        velocity: length-3 array [vx, vy, vz] in m/s.
        timestep_index: integer step k.
    """

    position: np.ndarray
    velocity: np.ndarray
    timestep_index: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ConfigError("state components must be finite")
        if self.timestep_index < 0:
            raise ConfigError("timestep_index must be non-negative")

    def as_vector(self):
        """Return the packed 6-vector [p, v]."""
        return np.concatenate([self.position, self.velocity])

    @staticmethod
    def from_vector(x, timestep_index):
        x = np.asarray(x, dtype=float)
        return StateVector(x[:3].copy(), x[3:].copy(), int(timestep_index))


@dataclass(frozen=True)
class Observation:
    """A (possibly missing) noisy position reading.

    ``valid`` is False when no measurement arrived at this step; the reading
    is then meaningless and must not be used.
    """

    position_reading: np.ndarray
    valid: bool
    timestep_index: int

    def __post_init__(self):
        object.__setattr__(
            self, "position_reading",
            np.asarray(self.position_reading, dtype=float))
        if self.valid and not np.all(np.isfinite(self.position_reading)):
            raise ConfigError("a valid observation needs a finite reading")


@dataclass(frozen=True)
class SystemModel:
    """The matrices of the linear motion/observation model."""

    dt: float
    transition: np.ndarray        # A, 6x6
    input_gain: np.ndarray        # F, 6x3
    observation: np.ndarray       # H, 3x6
    process_noise_cov: np.ndarray      # 6x6
    measurement_noise_cov: np.ndarray  # 3x3


@dataclass(frozen=True)
class PolarKinematics:
    """Speed/heading view of a velocity, plus the one-step angular rate.

    heading lies in (-pi, pi]; angular_velocity is the wrapped heading change
    to the next step divided by dt.
    """

    speed_xy: float
    speed_total: float
    heading: float
    angular_velocity: float
    vertical_velocity: float


@dataclass(frozen=True)
class DrivingForce:
    """Polar decomposition of one step's driving input.

    a_xy: tangential (along-heading) acceleration, m/s^2.
    a_z: vertical acceleration, m/s^2.
    a_theta: angular acceleration, rad/s^2.
    """

    a_xy: float
    a_z: float
    a_theta: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.a_xy, self.a_z, self.a_theta])):
            raise ConfigError("force components must be finite")

    def as_vector(self):
        return np.array([self.a_xy, self.a_z, self.a_theta])


def build_system(dt, process_noise_scale=1.0, measurement_noise_scale=1.0):
    """Assemble the SystemModel for a step size dt.

    Noise covariances are isotropic: process_noise_scale * I6 and
    measurement_noise_scale * I3. Scales may be zero (noiseless model) but
    not negative; dt must be positive.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if process_noise_scale < 0 or measurement_noise_scale < 0:
        raise ConfigError("noise scales must be non-negative")
    eye3 = np.eye(3)
    transition = np.block([[eye3, dt * eye3], [np.zeros((3, 3)), eye3]])
    input_gain = np.vstack([np.zeros((3, 3)), eye3])
    observation = np.hstack([eye3, np.zeros((3, 3))])
    return SystemModel(
        dt=float(dt),
        transition=transition,
        input_gain=input_gain,
        observation=observation,
        process_noise_cov=process_noise_scale * np.eye(6),
        measurement_noise_cov=measurement_noise_scale * np.eye(3),
    )


def to_polar(state, next_state, dt, prev_heading=None):
    """Polar kinematics of ``state``, with the angular rate toward ``next_state``.

    When the horizontal speed is below HEADING_EPSILON the heading cannot be
    computed; ``prev_heading`` is used instead (0.0 when there is none).
    """
    vx, vy, vz = state.velocity
    speed_xy = math.hypot(vx, vy)
    speed_total = math.sqrt(speed_xy * speed_xy + vz * vz)
    if speed_xy < HEADING_EPSILON:
        heading = 0.0 if prev_heading is None else float(prev_heading)
    else:
        heading = math.atan2(vy, vx)
    nvx, nvy = next_state.velocity[0], next_state.velocity[1]
    if math.hypot(nvx, nvy) < HEADING_EPSILON:
        next_heading = heading
    else:
        next_heading = math.atan2(nvy, nvx)
    angular_velocity = wrap_angle(next_heading - heading) / dt
    return PolarKinematics(
        speed_xy=speed_xy,
        speed_total=speed_total,
        heading=heading,
        angular_velocity=angular_velocity,
        vertical_velocity=float(vz),
    )


def polar_series(states, dt):
    """to_polar over consecutive state pairs, carrying headings across
    low-speed steps. Returns a list of length len(states)-1."""
    out = []
    prev_heading = None
    for state, next_state in zip(states[:-1], states[1:]):
        polar = to_polar(state, next_state, dt, prev_heading=prev_heading)
        out.append(polar)
        prev_heading = polar.heading
    return out


def force_to_velocity_delta(velocity, force, dt, prev_heading=None):
    """Cartesian velocity increment produced by one polar driving force.

    Semantics per step: speed_xy += a_xy*dt (floored at 0), heading +=
    a_theta*dt^2 (wrapped), v_z += a_z*dt. The returned delta is the exact
    velocity change, so feeding it into the linear state equation reproduces
    the turn without the speed inflation a linearized perpendicular kick
    would cause.
    """
    vx, vy, vz = float(velocity[0]), float(velocity[1]), float(velocity[2])
    speed_xy = math.hypot(vx, vy)
    if speed_xy < HEADING_EPSILON:
        heading = 0.0 if prev_heading is None else float(prev_heading)
    else:
        heading = math.atan2(vy, vx)
    new_speed = max(speed_xy + force.a_xy * dt, 0.0)
    new_heading = wrap_angle(heading + force.a_theta * dt * dt)
    new_vx = new_speed * math.cos(new_heading)
    new_vy = new_speed * math.sin(new_heading)
    new_vz = vz + force.a_z * dt
    return np.array([new_vx - vx, new_vy - vy, new_vz - vz])


def apply_dynamics(state, force, model, process_noise=None):
    """One step of the state equation under a polar driving force.

    ``process_noise`` is the realized 6-vector w(k) (zeros when omitted).
    Pure function: returns a new StateVector with timestep_index + 1.
    """
    delta_v = force_to_velocity_delta(state.velocity, force, model.dt)
    x = model.transition @ state.as_vector() + model.input_gain @ delta_v
    if process_noise is not None:
        x = x + np.asarray(process_noise, dtype=float)
    return StateVector.from_vector(x, state.timestep_index + 1)
