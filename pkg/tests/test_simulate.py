"""Trajectory-generator tests: hyper-prior draws, spike-and-slab pulses,
synthesis invariants, determinism.

Monte-Carlo checks compare empirical moments against independently computed
closed forms at 3 standard errors.
"""

import numpy as np
import pytest

from skyprofiler.kinematics import build_system
from skyprofiler.profiles import (
    ChannelProfile,
    MotionProfile,
    default_class_set,
    inactive_channel_profile,
)
from skyprofiler.simulate import (
    generate_population,
    sample_driving_forces,
    sample_profile,
    synthesize,
)


def _profile(lam, mu, var, object_id=0):
    chan = ChannelProfile(rate=lam, mean=mu, var=var)
    return MotionProfile(object_id=object_id, xy=chan, z=inactive_channel_profile(),
                         theta=chan)


class TestSampleProfile:
    def test_low_rate_class_beta_mean(self):
        # Beta(2, 50): mean 2/52, sd sqrt(ab/((a+b)^2(a+b+1)))
        spec = default_class_set()[0]
        n = 20_000
        draws = np.array([
            sample_profile(spec, i, rng_seed=i).xy.rate for i in range(n)])
        expect = 2 / 52
        sd = np.sqrt(2 * 50 / (52**2 * 53))
        assert abs(draws.mean() - expect) < 3 * sd / np.sqrt(n)

    def test_symmetric_beta_centers_at_half(self):
        spec = default_class_set()[1]  # rate prior Beta(4, 4)
        n = 10_000
        draws = np.array([
            sample_profile(spec, i, rng_seed=1_000_000 + i).xy.rate
            for i in range(n)])
        sd = np.sqrt(16 / (64 * 9))
        assert abs(draws.mean() - 0.5) < 3 * sd / np.sqrt(n)

    def test_precision_prior_mean_matches_shape_over_rate(self):
        # shape-rate convention: Gamma(shape, rate) has mean shape/rate
        spec = default_class_set()[2]  # precision prior Gamma(2, 0.1)
        n = 20_000
        taus = np.array([
            1.0 / sample_profile(spec, i, rng_seed=2_000_000 + i).theta.var
            for i in range(n)])
        expect, sd = 2 / 0.1, np.sqrt(2) / 0.1
        assert abs(taus.mean() - expect) < 3 * sd / np.sqrt(n)

    def test_deterministic_given_seed(self):
        spec = default_class_set()[0]
        a = sample_profile(spec, 3, rng_seed=99)
        b = sample_profile(spec, 3, rng_seed=99)
        assert a == b

    def test_2d_mode_disables_vertical_channel(self):
        prof = sample_profile(default_class_set()[0], 0, rng_seed=1, mode_2d=True)
        assert prof.z.rate == 0.0
        assert prof.z.mean == 0.0


class TestSampleDrivingForces:
    # force arrays have one row per step; columns are (xy, z, theta)

    def test_zero_rate_gives_all_zero(self):
        forces = sample_driving_forces(_profile(0.0, 1.0, 1.0), 500, rng_seed=5)
        assert not forces.any()

    def test_unit_rate_tiny_variance_pins_amplitude(self):
        forces = sample_driving_forces(_profile(1.0, 2.0, 1e-12), 200, rng_seed=6)
        assert np.all(np.abs(forces[:, 0] - 2.0) < 1e-4)

    def test_mixture_moments_match_closed_form(self):
        lam, mu, var, n = 0.1, 1.0, 1.0, 1_000_000
        a = sample_driving_forces(_profile(lam, mu, var), n, rng_seed=7)[:, 0]
        mean_expect = lam * mu
        var_expect = lam * (var + mu**2) - (lam * mu) ** 2
        assert abs(a.mean() - mean_expect) < 3 * np.sqrt(var_expect / n)
        m2 = (a - a.mean()) ** 2
        se_var = np.sqrt((np.mean(m2**2) - np.var(a) ** 2) / n)
        assert abs(np.var(a) - var_expect) < 3 * se_var

    def test_pulse_gaps_are_memoryless(self):
        lam = 0.3
        a = sample_driving_forces(_profile(lam, 1.0, 1.0), 200_000, rng_seed=8)[:, 0]
        gaps = np.diff(np.flatnonzero(a)) - 1
        mean_expect = (1 - lam) / lam
        sd = np.sqrt(1 - lam) / lam
        assert abs(gaps.mean() - mean_expect) < 3 * sd / np.sqrt(len(gaps))

    def test_channels_draw_independently(self):
        forces = sample_driving_forces(_profile(0.5, 1.0, 1.0), 50_000, rng_seed=9)
        corr = np.corrcoef(forces[:, 0] != 0, forces[:, 2] != 0)[0, 1]
        assert abs(corr) < 0.02


class TestSynthesize:
    def test_noiseless_full_rate_observations_equal_truth(self):
        model = build_system(1.0, 0.0, 0.0)
        prof = sample_profile(default_class_set()[1], 0, rng_seed=11)
        traj = synthesize(prof, model, 50, observation_rate=1.0, rng_seed=12)
        truth = {s.timestep_index: s for s in traj.states}
        for obs in traj.observations:
            assert obs.valid
            np.testing.assert_array_equal(
                obs.position_reading, truth[obs.timestep_index].position)

    def test_zero_rate_marks_everything_invalid(self):
        model = build_system(1.0)
        prof = sample_profile(default_class_set()[0], 0, rng_seed=13)
        traj = synthesize(prof, model, 30, observation_rate=0.0, rng_seed=14)
        assert all(not o.valid for o in traj.observations)

    def test_alignment_invariants(self):
        model = build_system(1.0)
        prof = sample_profile(default_class_set()[0], 0, rng_seed=15)
        traj = synthesize(prof, model, 40, rng_seed=16)
        assert len(traj.states) == len(traj.polar_forces) + 1
        assert len(traj.observations) == len(traj.states) - 1
        obs_steps = [o.timestep_index for o in traj.observations]
        state_steps = [s.timestep_index for s in traj.states]
        assert obs_steps == state_steps[1:]

    def test_2d_mode_keeps_motion_planar(self):
        model = build_system(1.0, 1.0, 1.0)
        prof = sample_profile(default_class_set()[2], 0, rng_seed=17)
        traj = synthesize(prof, model, 60, rng_seed=18, mode_2d=True)
        for s in traj.states:
            assert s.velocity[2] == 0.0
            assert s.position[2] == 0.0


class TestGeneratePopulation:
    def test_population_shape_and_labels(self, builtin_population):
        assert len(builtin_population) == 300
        labels = [t.true_class for t in builtin_population]
        assert labels.count(1) == labels.count(2) == labels.count(3) == 100

    def test_single_object_population(self, default_model):
        trajs = generate_population(
            default_class_set()[:1], (1,), default_model, 20, rng_seed=21)
        assert len(trajs) == 1
        assert trajs[0].true_class == 1

    def test_same_seed_reproduces_byte_identical(self, default_model):
        kw = dict(model=default_model, length=25, rng_seed=77)
        a = generate_population(default_class_set(), (2, 2, 2), **kw)
        b = generate_population(default_class_set(), (2, 2, 2), **kw)
        for ta, tb in zip(a, b):
            sa = np.array([s.as_vector() for s in ta.states])
            sb = np.array([s.as_vector() for s in tb.states])
            assert sa.tobytes() == sb.tobytes()
            assert ta.cartesian_inputs.tobytes() == tb.cartesian_inputs.tobytes()
            oa = np.array([o.position_reading for o in ta.observations])
            ob = np.array([o.position_reading for o in tb.observations])
            assert oa.tobytes() == ob.tobytes()
            assert [o.valid for o in ta.observations] == [o.valid for o in tb.observations]

    def test_extreme_classes_differ_in_pulse_rate(self, builtin_population):
        lam = {c: [] for c in (1, 2, 3)}
        for t in builtin_population:
            lam[t.true_class].append(t.profile.xy.rate)
        assert np.mean(lam[1]) < 0.1
        assert np.mean(lam[3]) > 0.9

    def test_update_rate_controls_gap_frequency(self, default_model):
        trajs = generate_population(
            default_class_set()[:1], (10,), default_model, 100,
            observation_rate=0.5, rng_seed=23)
        frac = np.mean([
            sum(o.valid for o in t.observations) / len(t.observations)
            for t in trajs])
        assert 0.4 < frac < 0.6
