import math

import numpy as np
import pytest

from marklander.env import (Action, DESCENT_ACTIONS, DETECTION_ACTIONS, DroneState,
                            EnvError, LandingEnv, MotionParams, NoiseSpec, Phase,
                            Termination, WorldSpec, apply_action, episode_return_bounds,
                            reset, reward_descent, reward_detection)

MOTION = MotionParams()
NO_NOISE = NoiseSpec(enabled=False)


def make_state(x, y, z, yaw=0.0, step=0, phase=Phase.DETECTION):
    return DroneState(position=(x, y, z), yaw=yaw, step_count=step, phase=phase)


class TestReset:
    def test_detection_altitude_fixed_at_20(self, full_world, rng):
        state = reset(Phase.DETECTION, full_world, rng)
        assert state.altitude == 20.0

    def test_detection_spawn_inside_box(self, full_world):
        for seed in range(50):
            state = reset(Phase.DETECTION, full_world, np.random.default_rng(seed))
            assert abs(state.x) <= 7.5 and abs(state.y) <= 7.5
            assert 0.0 <= state.yaw < 2 * math.pi

    def test_descent_without_exploring_start(self, full_world):
        for seed in range(50):
            state = reset(Phase.DESCENT, full_world, np.random.default_rng(seed),
                          exploring_start=False)
            assert state.altitude == 20.0
            assert abs(state.x) <= 1.5 and abs(state.y) <= 1.5

    def test_descent_exploring_start_spreads_altitude(self, full_world):
        alts = [reset(Phase.DESCENT, full_world, np.random.default_rng(s),
                      exploring_start=True).altitude for s in range(200)]
        assert min(alts) < 6.0 and max(alts) > 16.0
        assert all(full_world.descent_spawn_alt_min <= a <= 20.0 for a in alts)

    def test_same_seed_identical(self, full_world):
        a = reset(Phase.DETECTION, full_world, np.random.default_rng(123))
        b = reset(Phase.DETECTION, full_world, np.random.default_rng(123))
        assert a == b

    def test_unknown_phase_rejected(self, full_world, rng):
        with pytest.raises(EnvError):
            reset(Phase.TOUCHDOWN, full_world, rng)

    def test_spawn_uniformity_quadrants(self, full_world):
        # each quadrant of the spawn box receives 25% +- 3% over 1e4 seeds
        counts = np.zeros(4)
        for seed in range(10_000):
            s = reset(Phase.DETECTION, full_world, np.random.default_rng(seed))
            counts[(s.x > 0) * 2 + (s.y > 0)] += 1
        assert np.all(np.abs(counts / 10_000 - 0.25) < 0.03)


class TestApplyAction:
    def test_forward_at_yaw_zero_moves_one_meter(self, rng):
        s = apply_action(make_state(0, 0, 20), Action.FORWARD, MOTION, NO_NOISE, rng)
        assert s.position == pytest.approx((1.0, 0.0, 20.0))
        assert s.step_count == 1

    def test_descend_drops_half_meter(self, rng):
        s0 = make_state(0, 0, 10, phase=Phase.DESCENT)
        s = apply_action(s0, Action.DESCEND, MOTION, NO_NOISE, rng)
        assert s.altitude == pytest.approx(9.5)

    def test_stop_is_identity_displacement(self, rng):
        s0 = make_state(2.0, -3.0, 20)
        s = apply_action(s0, Action.STOP, MOTION, NO_NOISE, rng)
        assert s.position == s0.position
        assert s.step_count == s0.step_count + 1

    def test_yaw_rotates_body_frame(self, rng):
        s = apply_action(make_state(0, 0, 20, yaw=math.pi / 2), Action.FORWARD,
                         MOTION, NO_NOISE, rng)
        assert s.position == pytest.approx((0.0, 1.0, 20.0), abs=1e-12)

    def test_left_right_are_opposites(self, rng):
        left = apply_action(make_state(0, 0, 20), Action.LEFT, MOTION, NO_NOISE, rng)
        right = apply_action(make_state(0, 0, 20), Action.RIGHT, MOTION, NO_NOISE, rng)
        assert left.position[1] == pytest.approx(1.0)
        assert right.position[1] == pytest.approx(-1.0)

    def test_translation_composability(self, rng):
        s = make_state(0, 0, 20, yaw=0.7)
        one = apply_action(s, Action.FORWARD, MOTION, NO_NOISE, rng)
        two = apply_action(one, Action.FORWARD, MOTION, NO_NOISE, rng)
        assert two.x == pytest.approx(2 * one.x)
        assert two.y == pytest.approx(2 * one.y)

    def test_noise_adds_jitter_deterministically(self):
        noise = NoiseSpec(enabled=True, position_sigma=0.05)
        a = apply_action(make_state(0, 0, 20), Action.FORWARD, MOTION, noise,
                         np.random.default_rng(5))
        b = apply_action(make_state(0, 0, 20), Action.FORWARD, MOTION, noise,
                         np.random.default_rng(5))
        assert a == b
        assert a.position != (1.0, 0.0, 20.0)
        assert a.altitude == 20.0  # detection keeps altitude exactly

    def test_phase_subset_enforced_by_env(self, full_world):
        env = LandingEnv(full_world, NO_NOISE)
        env.reset(Phase.DETECTION, 0)
        with pytest.raises(EnvError):
            env.step(Action.DESCEND)
        env.reset(Phase.DESCENT, 0)
        with pytest.raises(EnvError):
            env.step(Action.TRIGGER)


class TestRewardDetection:
    def test_trigger_inside_target(self, full_world):
        out = reward_detection(make_state(0.4, 0.2, 20, step=3), Action.TRIGGER, full_world)
        assert (out.reward, out.terminal, out.reason) == (1.0, True, Termination.SUCCESS)

    def test_trigger_outside_target(self, full_world):
        out = reward_detection(make_state(10, 10, 20, step=3), Action.TRIGGER, full_world)
        assert (out.reward, out.terminal, out.reason) == (-1.0, True, Termination.FAILURE)

    def test_timeout_at_step_limit(self, full_world):
        out = reward_detection(make_state(3, 3, 20, step=20), Action.FORWARD, full_world)
        assert (out.reward, out.terminal, out.reason) == (-0.01, True, Termination.TIMEOUT)

    def test_living_cost_otherwise(self, full_world):
        out = reward_detection(make_state(3, 3, 20, step=5), Action.FORWARD, full_world)
        assert (out.reward, out.terminal, out.reason) == (-0.01, False, Termination.NONE)


class TestRewardDescent:
    def test_entering_target_zone(self, full_world):
        out = reward_descent(make_state(0.3, -0.2, 1.2, step=9, phase=Phase.DESCENT),
                             full_world)
        assert (out.reward, out.terminal, out.reason) == (1.0, True, Termination.SUCCESS)

    def test_low_outside_target_fails(self, full_world):
        out = reward_descent(make_state(2.5, 0, 1.2, step=9, phase=Phase.DESCENT),
                             full_world)
        assert (out.reward, out.terminal, out.reason) == (-1.0, True, Termination.FAILURE)

    def test_timeout_in_bounds(self, full_world):
        out = reward_descent(make_state(1.0, 0, 8.0, step=40, phase=Phase.DESCENT),
                             full_world)
        assert (out.reward, out.terminal, out.reason) == (-0.01, True, Termination.TIMEOUT)

    def test_high_above_target_footprint_is_not_success(self, full_world):
        out = reward_descent(make_state(0.1, 0.1, 5.0, step=3, phase=Phase.DESCENT),
                             full_world)
        assert not out.terminal


class TestEpisodeContracts:
    def run_episode(self, env, phase, seed, policy):
        state = env.reset(phase, seed)
        total, altitudes, rewards = 0.0, [state.altitude], []
        while not env.terminal:
            state, out = env.step(policy(state, env))
            total += out.reward
            rewards.append(out.reward)
            altitudes.append(state.altitude)
        return total, altitudes, rewards, out

    def test_detection_altitude_constant_and_bounded_return(self, full_world):
        env = LandingEnv(full_world, NO_NOISE)
        rng = np.random.default_rng(1)
        lo, hi = episode_return_bounds(Phase.DETECTION, full_world)
        for seed in range(30):
            total, altitudes, rewards, _ = self.run_episode(
                env, Phase.DETECTION, seed,
                lambda s, e: DETECTION_ACTIONS[rng.integers(5)])
            assert len(set(altitudes)) == 1
            assert lo <= total <= hi
            assert all(r in (1.0, -1.0, -0.01) for r in rewards)

    def test_descent_return_bounds(self, full_world):
        env = LandingEnv(full_world, NO_NOISE, exploring_start=True)
        rng = np.random.default_rng(2)
        lo, hi = episode_return_bounds(Phase.DESCENT, full_world)
        assert lo == pytest.approx(-1.39)
        for seed in range(30):
            total, _, _, _ = self.run_episode(
                env, Phase.DESCENT, seed,
                lambda s, e: DESCENT_ACTIONS[rng.integers(5)])
            assert lo <= total <= hi

    def test_no_step_after_terminal(self, full_world):
        env = LandingEnv(full_world, NO_NOISE)
        env.reset(Phase.DETECTION, 3)
        while not env.terminal:
            env.step(Action.TRIGGER)
        with pytest.raises(EnvError):
            env.step(Action.FORWARD)

    def test_exactly_one_terminal_outcome(self, full_world):
        env = LandingEnv(full_world, NO_NOISE)
        rng = np.random.default_rng(4)
        for seed in range(20):
            _, _, _, out = self.run_episode(
                env, Phase.DETECTION, seed,
                lambda s, e: DETECTION_ACTIONS[rng.integers(5)])
            assert out.terminal and out.reason is not Termination.NONE


class TestWorldSpec:
    def test_invariant_violations_rejected(self):
        with pytest.raises(EnvError):
            WorldSpec(detection_target_half=9.0)  # target outside spawn box
        with pytest.raises(EnvError):
            WorldSpec(world_extent=10.0)  # world smaller than spawn box
        with pytest.raises(EnvError):
            WorldSpec(descent_spawn_alt_min=1.0)  # spawns below failure altitude

    def test_descent_spawn_footprint_equals_detection_target(self, full_world):
        assert full_world.descent_spawn_half == full_world.detection_target_half

    def test_tiny_profile_world(self, tiny_world):
        assert tiny_world.world_extent == 20.0
        assert tiny_world.detection_altitude == 8.0
        assert tiny_world.detection_spawn_half == 3.0
