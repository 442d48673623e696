"""Model-core tests: system matrices, polar decomposition, input conversion.

Derived quantities are checked against independently coded oracles (matrix
powers, small-step numerical rotation) rather than against the
implementation's own helpers.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skyprofiler.exceptions import ConfigError
from skyprofiler.kinematics import (
    HEADING_EPSILON,
    DrivingForce,
    StateVector,
    apply_dynamics,
    build_system,
    force_to_velocity_delta,
    to_polar,
    wrap_angle,
)

finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


class TestBuildSystem:
    def test_unit_scales_give_identity_noise(self):
        m = build_system(1.0, 1.0, 1.0)
        np.testing.assert_array_equal(m.process_noise_cov, np.eye(6))
        np.testing.assert_array_equal(m.measurement_noise_cov, np.eye(3))

    def test_half_second_step_scales_coupling_block(self):
        m = build_system(0.5)
        np.testing.assert_array_equal(m.transition[:3, 3:], 0.5 * np.eye(3))

    def test_zero_scales_give_noiseless_system(self):
        m = build_system(1.0, 0.0, 0.0)
        assert not m.process_noise_cov.any()
        assert not m.measurement_noise_cov.any()

    def test_matrix_shapes(self):
        m = build_system(2.0)
        assert m.transition.shape == (6, 6)
        assert m.input_gain.shape == (6, 3)
        assert m.observation.shape == (3, 6)

    @pytest.mark.parametrize("dt", [0.0, -1.0])
    def test_nonpositive_dt_rejected(self, dt):
        with pytest.raises(ConfigError):
            build_system(dt)

    def test_negative_noise_scale_rejected(self):
        with pytest.raises(ConfigError):
            build_system(1.0, process_noise_scale=-0.1)

    @given(dt=st.floats(1e-3, 1e3), p=st.lists(finite_floats, min_size=3, max_size=3),
           v=st.lists(finite_floats, min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_transition_advances_position_by_velocity(self, dt, p, v):
        m = build_system(dt)
        out = m.transition @ np.array(p + v)
        np.testing.assert_allclose(out[:3], np.array(p) + dt * np.array(v), rtol=1e-12)
        np.testing.assert_array_equal(out[3:], v)

    def test_transition_exact_at_unit_step(self):
        m = build_system(1.0)
        x = np.array([0.3, -1.7, 2.0, 4.25, -0.5, 1.125])
        out = m.transition @ x
        assert np.all(out[:3] == x[:3] + x[3:])


class TestWrapAngle:
    @given(theta=st.floats(-1e4, 1e4, allow_nan=False))
    @settings(max_examples=200, deadline=None)
    def test_range_is_half_open_interval(self, theta):
        w = wrap_angle(theta)
        assert -np.pi < w <= np.pi

    @given(theta=st.floats(-50.0, 50.0), k=st.integers(-5, 5))
    @settings(max_examples=100, deadline=None)
    def test_periodic_under_full_turns(self, theta, k):
        assert wrap_angle(theta + 2 * np.pi * k) == pytest.approx(
            wrap_angle(theta), abs=1e-9)

    def test_boundary_maps_to_positive_pi(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)

    def test_vectorized_matches_scalar(self):
        thetas = np.array([-7.0, -np.pi, 0.0, 2.5, 9.0])
        np.testing.assert_allclose(
            wrap_angle(thetas), [wrap_angle(t) for t in thetas], rtol=0, atol=1e-12)


def _state(p, v, k=0):
    return StateVector(np.asarray(p, dtype=float), np.asarray(v, dtype=float), k)


class TestToPolar:
    def test_three_four_five_speed(self):
        pol = to_polar(_state((0, 0, 0), (3, 4, 0)), _state((3, 4, 0), (3, 4, 0), 1), 1.0)
        assert pol.speed_xy == pytest.approx(5.0)
        assert pol.speed_total == pytest.approx(5.0)

    def test_quarter_turn_angular_velocity(self):
        pol = to_polar(_state((0, 0, 0), (1, 0, 0)), _state((1, 0, 0), (0, 1, 0), 1), 1.0)
        assert pol.angular_velocity == pytest.approx(np.pi / 2)

    def test_degenerate_xy_carries_previous_heading(self):
        pol = to_polar(_state((0, 0, 0), (0, 0, 2)), _state((0, 0, 2), (0, 0, 2), 1), 1.0,
                       prev_heading=0.7)
        assert pol.speed_xy == pytest.approx(0.0)
        assert pol.vertical_velocity == pytest.approx(2.0)
        assert pol.heading == pytest.approx(0.7)

    @given(v=st.lists(st.floats(-100, 100), min_size=3, max_size=3))
    @settings(max_examples=100, deadline=None)
    def test_speed_decomposition_identity(self, v):
        pol = to_polar(_state((0, 0, 0), v), _state(v, v, 1), 1.0, prev_heading=0.0)
        assert pol.speed_xy >= 0
        assert pol.speed_total >= pol.speed_xy - 1e-12
        assert pol.speed_total**2 == pytest.approx(
            pol.speed_xy**2 + pol.vertical_velocity**2, rel=1e-9, abs=1e-12)

    @given(v=st.lists(st.floats(-100, 100), min_size=2, max_size=2), vz=st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_round_trip_reconstruction(self, v, vz):
        vel = np.array([v[0], v[1], vz])
        if np.hypot(*vel[:2]) < HEADING_EPSILON:
            return
        pol = to_polar(_state((0, 0, 0), vel), _state(vel, vel, 1), 1.0)
        rebuilt = np.array([
            pol.speed_xy * np.cos(pol.heading),
            pol.speed_xy * np.sin(pol.heading),
            pol.vertical_velocity,
        ])
        np.testing.assert_allclose(rebuilt, vel, rtol=1e-9, atol=1e-9)


class TestApplyDynamics:
    def test_constant_velocity_advance(self):
        m = build_system(1.0, 0.0, 0.0)
        out = apply_dynamics(_state((0, 0, 0), (1, 0, 0)), DrivingForce(0, 0, 0), m)
        np.testing.assert_allclose(out.position, [1, 0, 0])
        np.testing.assert_allclose(out.velocity, [1, 0, 0])
        assert out.timestep_index == 1

    def test_pure_tangential_input_raises_speed(self):
        m = build_system(1.0, 0.0, 0.0)
        out = apply_dynamics(_state((0, 0, 0), (1, 0, 0)), DrivingForce(1, 0, 0), m)
        np.testing.assert_allclose(out.velocity, [2, 0, 0], atol=1e-12)

    @pytest.mark.parametrize("dt", [1.0, 0.25])
    def test_angular_input_matches_small_step_integrator(self, dt):
        # oracle: integrate the induced turn rate (a_theta * dt) over the
        # step in 10^4 sub-steps, rotating the velocity incrementally
        m = build_system(dt, 0.0, 0.0)
        a_theta = np.pi / 2
        out = apply_dynamics(_state((0, 0, 0), (1, 0, 0)), DrivingForce(0, 0, a_theta), m)
        n_sub = 10_000
        v = np.array([1.0, 0.0])
        turn_rate = a_theta * dt
        for _ in range(n_sub):
            ang = turn_rate * dt / n_sub
            rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
            v = rot @ v
        assert np.arctan2(out.velocity[1], out.velocity[0]) == pytest.approx(
            np.arctan2(v[1], v[0]), abs=1e-6)
        assert np.hypot(*out.velocity[:2]) == pytest.approx(1.0, rel=1e-12)

    def test_zero_input_iteration_equals_matrix_power(self):
        m = build_system(0.7, 0.0, 0.0)
        x0 = _state((1.0, -2.0, 3.0), (0.5, 0.25, -1.0))
        state = x0
        for _ in range(9):
            state = apply_dynamics(state, DrivingForce(0, 0, 0), m)
        oracle = np.linalg.matrix_power(m.transition, 9) @ x0.as_vector()
        np.testing.assert_allclose(state.as_vector(), oracle, rtol=1e-9)

    @given(speed=st.floats(0.1, 80), heading=st.floats(-3.1, 3.1),
           a_xy=st.floats(-5, 5), a_theta=st.floats(-2, 2))
    @settings(max_examples=100, deadline=None)
    def test_conversion_preserves_polar_semantics(self, speed, heading, a_xy, a_theta):
        vel = np.array([speed * np.cos(heading), speed * np.sin(heading), 0.0])
        delta = force_to_velocity_delta(vel, DrivingForce(a_xy, 0.0, a_theta), 1.0)
        new_v = vel + delta
        new_speed = np.hypot(*new_v[:2])
        assert new_speed == pytest.approx(max(speed + a_xy, 0.0), rel=1e-9, abs=1e-9)
        if new_speed > HEADING_EPSILON and max(speed + a_xy, 0.0) > 1e-9:
            got = np.arctan2(new_v[1], new_v[0])
            assert wrap_angle(got - (heading + a_theta)) == pytest.approx(0.0, abs=1e-9)


class TestTypeInvariants:
    def test_state_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            StateVector(np.array([np.nan, 0, 0]), np.zeros(3), 0)

    def test_state_rejects_negative_timestep(self):
        with pytest.raises(ConfigError):
            StateVector(np.zeros(3), np.zeros(3), -1)

    def test_force_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            DrivingForce(np.inf, 0.0, 0.0)
