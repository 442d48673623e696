"""State and driving-input estimation from intermittent position readings.

The driving input cannot be treated as known: it enters the velocity, while
observations see position only, so a step-k input first becomes visible in
the step-k+2 reading (through H A F = dt I). The filter therefore runs a
joint Kalman recursion over the stacked pair [x(t); x(t-1)]:

 - the unknown per-step input is modeled as zero-mean noise on the velocity
   components with a large variance INPUT_PRIOR_VAR (diffuse prior; in the
   infinite-variance limit this is the unbiased minimum-variance input
   estimator, and the finite value keeps every innovation covariance
   invertible);
 - keeping the previous state in the recursion makes the update at time t
   retrodict x(t-1) with the newly revealed information, which is exactly
   where the input estimate lives: the revealed velocity increment.

Emitted state k therefore uses observations up to k+1; the last state of a
pass is filtered-only. Missing observations trigger the time update alone
(input estimate zero), per the intermittent-observation contract.

Force sequences in polar form (tangential/vertical/angular) come from first
differences of the emitted states' speed, vertical velocity, and heading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericalError
from .kinematics import (
    HEADING_EPSILON,
    DrivingForce,
    StateVector,
    wrap_angle,
)

INPUT_PRIOR_VAR = 1e4          # diffuse per-step input prior (velocity units^2)
INITIAL_STATE_VAR = 100.0      # P0 = 100 I on a cold start
COLD_START_SKIP = 2            # warm-up force samples dropped after a cold init
_SINGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class FilterState:
    """Posterior after processing the observation slot at ``timestep_index``.

    state_estimate/error_covariance describe x(t) given data through t.
    input_estimate is the most recently revealed velocity increment (the
    input on the transition t-2 -> t-1), zeros until enough steps have run.
    The remaining fields chain the recursion and carry the lag-1 retrodicted
    previous state.
    """

    state_estimate: np.ndarray
    error_covariance: np.ndarray
    input_estimate: np.ndarray
    timestep_index: int
    augmented_mean: np.ndarray = field(repr=False)
    augmented_cov: np.ndarray = field(repr=False)
    smoothed_mean: np.ndarray | None = field(default=None, repr=False)
    smoothed_cov: np.ndarray | None = field(default=None, repr=False)
    # cross-covariance between this posterior's retrodicted-velocity error
    # and the previous posterior's; consecutive errors share noise terms
    # with opposite signs, so differencing needs it for an honest variance
    smoothed_velocity_cross_cov: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class EstimatedTrajectory:
    """Filter output over one observation window.

    states[i] is the estimate for timestep ``states[i].timestep_index``;
    all but the last benefit from the one-step input reveal.
    force_array rows are (a_xy, a_z, a_theta) per transition, length
    len(states) - 2; force_valid marks samples safe for downstream fitting
    (observation present at the reveal step, outside the cold-start warm-up).
    noise_vars estimates the per-channel variance of the force noise floor
    (estimation + process noise), used as the spike width downstream.
    """

    states: tuple
    force_array: np.ndarray
    force_valid: np.ndarray
    force_timesteps: np.ndarray
    covariance_trace: np.ndarray
    noise_vars: dict
    cartesian_input_estimates: np.ndarray
    final_filter_state: FilterState

    @property
    def forces(self):
        return tuple(DrivingForce(*row) for row in self.force_array)

    def valid_force_samples(self, channel):
        j = {"xy": 0, "z": 1, "theta": 2}[channel]
        return self.force_array[self.force_valid, j]


def _augmented_transition(model):
    a = model.transition
    phi = np.zeros((12, 12))
    phi[:6, :6] = a
    phi[6:, :6] = np.eye(6)
    return phi


def _augmented_process_cov(model):
    q = np.zeros((12, 12))
    q[:6, :6] = model.process_noise_cov
    q[3:6, 3:6] += INPUT_PRIOR_VAR * np.eye(3)
    return q


def initial_filter_state(position, timestep_index, velocity=None,
                         variance=INITIAL_STATE_VAR):
    """Cold-start posterior anchored at a position reading (zero velocity
    unless given)."""
    mean6 = np.zeros(6)
    mean6[:3] = np.asarray(position, dtype=float)
    if velocity is not None:
        mean6[3:] = np.asarray(velocity, dtype=float)
    aug_mean = np.concatenate([mean6, mean6])
    aug_cov = variance * np.eye(12)
    return FilterState(
        state_estimate=mean6,
        error_covariance=variance * np.eye(6),
        input_estimate=np.zeros(3),
        timestep_index=int(timestep_index),
        augmented_mean=aug_mean,
        augmented_cov=aug_cov,
    )


def filter_step(prior, observation, model, _phi=None, _qaug=None):
    """Advance one step: time update, then measurement update when the
    observation is valid (time update only otherwise, input estimate
    untouched at zero for that transition).

    Raises NumericalError when the innovation covariance is numerically
    singular, carrying the failing timestep index.
    """
    phi = _augmented_transition(model) if _phi is None else _phi
    qaug = _augmented_process_cov(model) if _qaug is None else _qaug

    mean = phi @ prior.augmented_mean
    cov = phi @ prior.augmented_cov @ phi.T + qaug
    t = prior.timestep_index + 1
    if observation is not None and observation.timestep_index != t:
        raise ConfigError(
            f"observation timestep {observation.timestep_index} does not "
            f"follow prior timestep {prior.timestep_index}")

    # E[e_new e_prev^T] restricted to the two retrodicted-velocity blocks;
    # the transition maps row block 9:12 onto the prior's rows 3:6
    prev_cols = prior.augmented_cov[:, 9:12]
    cross = prev_cols[3:6, :].copy()

    valid_update = observation is not None and observation.valid
    if valid_update:
        # H_aug selects the first three components; exploit that.
        s = cov[:3, :3] + model.measurement_noise_cov
        if not np.all(np.isfinite(s)):
            raise NumericalError("non-finite innovation covariance", t)
        eigvals = np.linalg.eigvalsh(s)
        if eigvals[0] <= _SINGULARITY_RTOL * max(eigvals[-1], 1.0):
            raise NumericalError("singular innovation covariance", t)
        gain = np.linalg.solve(s, cov[:3, :]).T          # (12, 3)
        innovation = observation.position_reading - mean[:3]
        mean = mean + gain @ innovation
        ikh = np.eye(12)
        ikh[:, :3] -= gain
        cov = ikh @ cov @ ikh.T + gain @ model.measurement_noise_cov @ gain.T
        cross -= gain[9:12, :] @ (prev_cols[:3, :] + model.dt * prev_cols[3:6, :])
    cov = 0.5 * (cov + cov.T)

    smoothed_mean = mean[6:].copy()
    smoothed_cov = cov[6:, 6:].copy()
    if valid_update and prior.smoothed_mean is not None:
        input_estimate = smoothed_mean[3:] - prior.smoothed_mean[3:]
    else:
        input_estimate = np.zeros(3)
    return FilterState(
        state_estimate=mean[:6].copy(),
        error_covariance=cov[:6, :6].copy(),
        input_estimate=input_estimate,
        timestep_index=t,
        augmented_mean=mean,
        augmented_cov=cov,
        smoothed_mean=smoothed_mean,
        smoothed_cov=smoothed_cov,
        smoothed_velocity_cross_cov=cross,
    )


def filter_trajectory(observations, model, initial_guess=None):
    """Run the filter over an observation window and assemble the estimated
    trajectory (states, polar forces, noise floor).

    Needs at least 3 observations. Without an initial guess the pass cold
    starts at the first valid observation (position reading, zero velocity);
    a StateVector initial_guess warm starts one step before the window.
    """
    observations = list(observations)
    if len(observations) < 3:
        raise ConfigError("filter_trajectory needs at least 3 observations")

    phi = _augmented_transition(model)
    qaug = _augmented_process_cov(model)

    cold_start = initial_guess is None
    if cold_start:
        first_valid = next((i for i, o in enumerate(observations) if o.valid), None)
        if first_valid is None:
            raise ConfigError("no valid observation in the window")
        anchor = observations[first_valid]
        state = initial_filter_state(anchor.position_reading, anchor.timestep_index)
        remaining = observations[first_valid + 1:]
    else:
        state = initial_filter_state(
            initial_guess.position,
            observations[0].timestep_index - 1,
            velocity=initial_guess.velocity,
        )
        remaining = observations

    # smoothed (lag-1) estimates; index i of `means` is the final estimate
    # for the step it names
    steps = [state.timestep_index]
    means = [state.state_estimate]
    covs = [state.error_covariance]
    crosses = [np.zeros((3, 3))]
    reveal_valid = []
    for obs in remaining:
        state = filter_step(state, obs, model, _phi=phi, _qaug=qaug)
        means[-1] = state.smoothed_mean
        covs[-1] = state.smoothed_cov
        steps.append(state.timestep_index)
        means.append(state.state_estimate)
        covs.append(state.error_covariance)
        crosses.append(state.smoothed_velocity_cross_cov)
        reveal_valid.append(bool(obs.valid))

    means = np.asarray(means)
    covs = np.asarray(covs)
    crosses = np.asarray(crosses)
    steps = np.asarray(steps)
    states = tuple(StateVector.from_vector(m, k) for m, k in zip(means, steps))
    cov_trace = np.einsum("kii->k", covs)

    force_array, force_valid, force_steps, noise_vars = _extract_forces(
        means, covs, crosses, steps, reveal_valid, model, cold_start)
    cart_inputs = np.diff(means[:, 3:], axis=0)
    return EstimatedTrajectory(
        states=states,
        force_array=force_array,
        force_valid=force_valid,
        force_timesteps=force_steps,
        covariance_trace=cov_trace,
        noise_vars=noise_vars,
        cartesian_input_estimates=cart_inputs,
        final_filter_state=state,
    )


def _polar_arrays(means):
    """Vectorized speed/heading decomposition of a (n, 6) state matrix.

    Headings at sub-epsilon speeds are forward-filled from the previous
    step (0 when the trajectory starts degenerate).
    """
    vx, vy, vz = means[:, 3], means[:, 4], means[:, 5]
    speed_xy = np.hypot(vx, vy)
    heading = np.arctan2(vy, vx)
    degenerate = speed_xy < HEADING_EPSILON
    if degenerate.any():
        heading = heading.copy()
        last = 0.0
        for i in range(len(heading)):
            if degenerate[i]:
                heading[i] = last
            else:
                last = heading[i]
    return speed_xy, heading, vz


def _extract_forces(means, covs, crosses, steps, reveal_valid, model, cold_start):
    """First-difference polar forces with their validity mask and the
    per-channel noise floor estimate.

    Force index i spans states[i] -> states[i+1]; there are n-2 of them for
    n states (the final state, filtered-only, is left out of differencing).
    A sample is valid when the observation revealing the leading state's
    velocity was present and both spanned steps are consecutive.
    """
    n = len(means)
    dt = model.dt
    m = n - 2
    if m <= 0:
        empty = np.zeros((0, 3))
        return empty, np.zeros(0, dtype=bool), np.zeros(0, dtype=int), \
            _noise_vars(means, covs, crosses, np.zeros(0, dtype=bool), model)

    speed_xy, heading, vz = _polar_arrays(means)
    a_xy = np.diff(speed_xy)[:m] / dt
    a_z = np.diff(vz)[:m] / dt
    a_theta = wrap_angle(np.diff(heading))[:m] / dt**2
    force_array = np.column_stack([a_xy, a_z, a_theta])
    force_steps = steps[:m]

    contiguous = np.diff(steps)[:m] == 1
    # reveal_valid[i] says the observation at steps[i+1] was present, which
    # is what pins down the velocity at steps[i]
    revealed = np.asarray(reveal_valid + [False])[:m]
    force_valid = contiguous & revealed
    if cold_start:
        force_valid[:COLD_START_SKIP] = False
    noise_vars = _noise_vars(means, covs, crosses, force_valid, model)
    return force_array, force_valid, force_steps, noise_vars


def _noise_vars(means, covs, crosses, force_valid, model):
    """Per-channel noise-floor variance of the force samples.

    Each sample differences two retrodicted velocities whose errors are
    correlated (they share observation and process noise with opposite
    signs), so the variance is assembled from the full quadratic form

        var(u_B.e_B - u_A.e_A) = u_B'P_B u_B + u_A'P_A u_A - 2 u_B'C u_A

    with C the consecutive-posterior cross-covariance, plus the velocity
    process noise (which the estimator cannot separate from the input).
    The angular channel divides by the spanned speeds (floored at 1) and by
    dt^2 twice, mirroring how a heading increment maps back to a force.
    Reported per channel as the mean over the valid samples: the floor is
    speed-dependent, and downstream a single spike width has to cover the
    pooled sample population, whose variance is the average per-sample
    variance (warm-up samples carrying the diffuse prior are masked out).
    """
    dt = model.dt
    q_vel = float(np.mean(np.diag(model.process_noise_cov)[3:]))
    n = len(means)
    m = n - 2
    if m <= 0:
        flat = 3.0 * q_vel / dt**2
        return {"xy": flat, "z": flat, "theta": flat / dt**2}

    speed_xy, heading, _ = _polar_arrays(means)
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    u_par = np.column_stack([cos_h, sin_h, np.zeros_like(cos_h)])
    u_perp = np.column_stack([-sin_h, cos_h, np.zeros_like(cos_h)])
    speed_floor = np.maximum(speed_xy, 1.0)

    p_a = covs[:m, 3:, 3:]          # error cov of the trailing velocity
    p_b = covs[1:m + 1, 3:, 3:]     # error cov of the leading velocity
    c_ba = crosses[2:m + 2]         # E[e_B e_A^T]

    def channel_var(u_a, u_b):
        quad_a = np.einsum("ki,kij,kj->k", u_a, p_a, u_a)
        quad_b = np.einsum("ki,kij,kj->k", u_b, p_b, u_b)
        quad_c = np.einsum("ki,kij,kj->k", u_b, c_ba, u_a)
        return quad_b + quad_a - 2.0 * quad_c

    var_xy = channel_var(u_par[:m], u_par[1:m + 1]) + q_vel
    var_z = p_b[:, 2, 2] + p_a[:, 2, 2] - 2.0 * c_ba[:, 2, 2] + q_vel
    s_a, s_b = speed_floor[:m], speed_floor[1:m + 1]
    var_theta = (
        np.einsum("ki,kij,kj->k", u_perp[1:m + 1], p_b, u_perp[1:m + 1]) / s_b**2
        + np.einsum("ki,kij,kj->k", u_perp[:m], p_a, u_perp[:m]) / s_a**2
        - 2.0 * np.einsum("ki,kij,kj->k", u_perp[1:m + 1], c_ba, u_perp[:m])
        / (s_a * s_b)
        + q_vel / s_b**2
    )
    mask = force_valid if force_valid.any() else np.ones(m, dtype=bool)
    return {
        "xy": float(np.mean(var_xy[mask]) / dt**2),
        "z": float(np.mean(var_z[mask]) / dt**2),
        "theta": float(np.mean(var_theta[mask]) / dt**4),
    }


def predict_ahead(filter_state, model, horizon):
    """Open-loop prediction: propagate the current estimate ``horizon``
    steps with zero input. Returns one StateVector per step ahead."""
    if horizon < 1:
        raise ConfigError("horizon must be >= 1")
    x = filter_state.state_estimate.copy()
    out = []
    for h in range(1, horizon + 1):
        x = model.transition @ x
        out.append(StateVector.from_vector(x, filter_state.timestep_index + h))
    return out


def filter_population(trajectories, model):
    """Filter every trajectory of a population.

    Windows sharing one observation-availability pattern (always the case at
    r=1) run through a single covariance recursion with the means batched,
    which is exactly equivalent to per-object passes and much faster.
    """
    patterns = {}
    for idx, traj in enumerate(trajectories):
        key = bytes(o.valid for o in traj.observations)
        patterns.setdefault(key, []).append(idx)
    results = [None] * len(trajectories)
    for key, indices in patterns.items():
        if len(indices) == 1 or not all(key):
            for idx in indices:
                results[idx] = filter_trajectory(trajectories[idx].observations, model)
        else:
            batch = _filter_batch_all_valid([trajectories[i] for i in indices], model)
            for idx, est in zip(indices, batch):
                results[idx] = est
    return results


def _filter_batch_all_valid(trajectories, model):
    """Shared-covariance batch pass for windows where every observation is
    valid and timesteps align. Produces results identical to
    filter_trajectory object by object."""
    n_obj = len(trajectories)
    obs0 = trajectories[0].observations
    n_obs = len(obs0)
    if any(len(t.observations) != n_obs for t in trajectories):
        raise ConfigError("batch filtering needs equal-length windows")
    readings = np.stack([
        np.array([o.position_reading for o in t.observations])
        for t in trajectories])                       # (n_obj, n_obs, 3)
    steps = np.array([o.timestep_index for o in obs0])

    phi = _augmented_transition(model)
    qaug = _augmented_process_cov(model)

    means = np.zeros((n_obj, 12))
    means[:, :3] = readings[:, 0, :]
    means[:, 6:9] = readings[:, 0, :]
    cov = INITIAL_STATE_VAR * np.eye(12)

    all_means = np.zeros((n_obj, n_obs, 6))
    all_means[:, 0] = means[:, :6]
    covs = np.zeros((n_obs, 6, 6))
    covs[0] = cov[:6, :6]
    crosses = np.zeros((n_obs, 3, 3))
    for i in range(1, n_obs):
        prev_cols = cov[:, 9:12].copy()
        means = means @ phi.T
        cov = phi @ cov @ phi.T + qaug
        s = cov[:3, :3] + model.measurement_noise_cov
        eigvals = np.linalg.eigvalsh(s)
        if eigvals[0] <= _SINGULARITY_RTOL * max(eigvals[-1], 1.0):
            raise NumericalError("singular innovation covariance", int(steps[i]))
        gain = np.linalg.solve(s, cov[:3, :]).T
        innovation = readings[:, i, :] - means[:, :3]
        means = means + innovation @ gain.T
        ikh = np.eye(12)
        ikh[:, :3] -= gain
        cov = ikh @ cov @ ikh.T + gain @ model.measurement_noise_cov @ gain.T
        cov = 0.5 * (cov + cov.T)
        all_means[:, i - 1] = means[:, 6:]
        all_means[:, i] = means[:, :6]
        covs[i - 1] = cov[6:, 6:]
        covs[i] = cov[:6, :6]
        crosses[i] = prev_cols[3:6, :] - gain[9:12, :] @ (
            prev_cols[:3, :] + model.dt * prev_cols[3:6, :])

    results = []
    reveal_valid = [True] * (n_obs - 1)
    shared_trace = np.einsum("kii->k", covs)
    for j in range(n_obj):
        force_array, force_valid, force_steps, noise_vars = _extract_forces(
            all_means[j], covs, crosses, steps, reveal_valid, model,
            cold_start=True)
        states = tuple(StateVector.from_vector(m, k)
                       for m, k in zip(all_means[j], steps))
        final_state = FilterState(
            state_estimate=means[j, :6].copy(),
            error_covariance=cov[:6, :6].copy(),
            input_estimate=all_means[j][-2, 3:] - all_means[j][-3, 3:],
            timestep_index=int(steps[-1]),
            augmented_mean=means[j].copy(),
            augmented_cov=cov,
            smoothed_mean=means[j, 6:].copy(),
            smoothed_cov=cov[6:, 6:].copy(),
            smoothed_velocity_cross_cov=crosses[-1],
        )
        results.append(EstimatedTrajectory(
            states=states,
            force_array=force_array,
            force_valid=force_valid,
            force_timesteps=force_steps,
            covariance_trace=shared_trace,
            noise_vars=noise_vars,
            cartesian_input_estimates=np.diff(all_means[j][:, 3:], axis=0),
            final_filter_state=final_state,
        ))
    return results
