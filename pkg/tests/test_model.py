"""Success-model tests: parameterization, sampling, rewards."""

import numpy as np
import pytest

from horizonlab.model import (
    PolicyParams,
    SCORE_CLAMP,
    dense_reward_vector,
    init_params,
    logistic,
    logit,
    max_reliable_horizon,
    params_from_probabilities,
    prefix_success,
    sample_trajectories,
    sample_trajectory,
    step_success,
    success_gradients,
    terminal_reward,
)
from oracles import central_difference, enumerate_patterns


class TestParameterization:
    def test_single_step_has_no_depth_scores(self):
        params = init_params(H=1, delta=0.49, seed=123)
        assert params.theta_depth == ()
        assert 0.49 <= params.atomic_reliability <= 0.51

    def test_init_is_deterministic(self):
        a = init_params(H=4, delta=0.3, seed=7)
        b = init_params(H=4, delta=0.3, seed=7)
        assert a == b

    def test_init_respects_probability_band(self):
        params = init_params(H=4, delta=0.3, seed=7)
        for j in range(1, 5):
            assert 0.3 <= step_success(params, j) <= 0.7

    @pytest.mark.parametrize("seed", range(20))
    def test_init_band_many_seeds(self, seed):
        params = init_params(H=6, delta=0.2, seed=seed)
        q = params.step_probabilities()
        assert np.all(q >= 0.2 - 1e-12) and np.all(q <= 0.8 + 1e-12)

    def test_init_rejects_bad_delta(self):
        with pytest.raises(ValueError):
            init_params(H=3, delta=0.5, seed=0)
        with pytest.raises(ValueError):
            init_params(H=3, delta=0.0, seed=0)

    def test_sigma_one_is_fixed(self):
        params = params_from_probabilities([0.8, 0.4])
        assert params.depth_reliability(1) == 1.0
        assert step_success(params, 1) == pytest.approx(0.8, abs=1e-12)

    def test_step_success_is_product(self):
        params = params_from_probabilities([0.8, 0.4])
        assert step_success(params, 2) == pytest.approx(0.8 * 0.5, abs=1e-12)

    def test_step_success_near_saturated_atomic(self):
        # p driven to the clamp: q_3 collapses to sigma_3.
        params = PolicyParams(horizon=3, theta_atomic=SCORE_CLAMP,
                              theta_depth=(0.0, logit(0.25)))
        assert step_success(params, 3) == pytest.approx(0.25, abs=1e-6)

    def test_depth_range_checks(self):
        params = params_from_probabilities([0.5, 0.3])
        with pytest.raises(ValueError):
            step_success(params, 0)
        with pytest.raises(ValueError):
            step_success(params, 3)

    def test_params_from_probabilities_rejects_rising_q(self):
        with pytest.raises(ValueError):
            params_from_probabilities([0.4, 0.6])


class TestPrefixSuccess:
    def test_empty_prefix(self):
        params = params_from_probabilities([0.5, 0.4])
        assert prefix_success(params, 0) == 1.0

    def test_two_step_product(self):
        params = params_from_probabilities([0.8, 0.4])
        assert prefix_success(params, 2) == pytest.approx(0.32, abs=1e-12)

    def test_constant_half_chain(self):
        params = params_from_probabilities([0.5] * 10)
        assert prefix_success(params, 10) == pytest.approx(2.0**-10, rel=1e-12)

    def test_prefix_recurrence_exact(self):
        for seed in range(5):
            params = init_params(H=8, delta=0.15, seed=seed)
            for i in range(8):
                assert prefix_success(params, i + 1) == pytest.approx(
                    prefix_success(params, i) * step_success(params, i + 1), rel=1e-15
                )


class TestSampling:
    def test_certain_success(self):
        params = PolicyParams(horizon=5, theta_atomic=SCORE_CLAMP,
                              theta_depth=(SCORE_CLAMP,) * 4)
        traj = sample_trajectory(params, 5, seed=0)
        assert traj.bits == (1, 1, 1, 1, 1)
        assert traj.reach == 6

    def test_certain_failure_at_first_step(self):
        params = PolicyParams(horizon=3, theta_atomic=-SCORE_CLAMP,
                              theta_depth=(0.0, 0.0))
        traj = sample_trajectory(params, 3, seed=4)
        assert traj.bits == (0, 0, 0)
        assert traj.reach == 1

    def test_deterministic_under_seed(self):
        params = init_params(H=6, delta=0.3, seed=2)
        a = sample_trajectories(params, 6, 64, seed=9)
        b = sample_trajectories(params, 6, 64, seed=9)
        assert np.array_equal(a.bits, b.bits)

    def test_absorbing_failure(self):
        params = init_params(H=8, delta=0.4, seed=5)
        batch = sample_trajectories(params, 8, 2000, seed=1)
        for i in range(len(batch)):
            bits = batch.bits[i]
            if 0 in bits:
                first_zero = int(np.argmin(bits))
                assert not bits[first_zero:].any()
                assert batch.reach[i] == first_zero + 1
            else:
                assert batch.reach[i] == 9

    def test_all_ones_frequency_matches_prefix_success(self):
        params = init_params(H=3, delta=0.25, seed=3)
        n = 1_000_000
        batch = sample_trajectories(params, 3, n, seed=17)
        p_exact = prefix_success(params, 3)
        freq = float((batch.reach == 4).mean())
        se = (p_exact * (1 - p_exact) / n) ** 0.5
        assert abs(freq - p_exact) <= 3 * se

    @pytest.mark.parametrize("H", [5, 12])
    def test_pattern_distribution_matches_enumeration(self, H):
        # Every absorbing pattern frequency within 4 binomial standard errors.
        params = init_params(H=H, delta=0.2, seed=11)
        n = 1_000_000
        batch = sample_trajectories(params, H, n, seed=23)
        counts = np.bincount(batch.reach, minlength=H + 2)
        for prob, _bits, reach in enumerate_patterns(params.step_probabilities(), H):
            freq = counts[reach] / n
            se = (prob * (1 - prob) / n) ** 0.5
            assert abs(freq - prob) <= 4 * se, f"pattern reach={reach}"


class TestRewards:
    def test_terminal_reward_full_prefix(self):
        t = sample_trajectory(
            PolicyParams(horizon=3, theta_atomic=SCORE_CLAMP, theta_depth=(SCORE_CLAMP,) * 2),
            3, seed=0,
        )
        assert terminal_reward(t, 3) == 1

    def test_terminal_reward_prefix_only(self):
        from horizonlab.model import Trajectory

        t = Trajectory(horizon=3, bits=(1, 1, 0), reach=3)
        assert terminal_reward(t, 2) == 1
        assert terminal_reward(t, 3) == 0
        t = Trajectory(horizon=3, bits=(1, 0, 0), reach=2)
        assert terminal_reward(t, 3) == 0

    def test_terminal_reward_horizon_check(self):
        from horizonlab.model import Trajectory

        t = Trajectory(horizon=2, bits=(1, 1), reach=3)
        with pytest.raises(ValueError):
            terminal_reward(t, 3)

    def test_dense_rewards(self):
        from horizonlab.model import Trajectory

        t = Trajectory(horizon=3, bits=(1, 1, 1), reach=4)
        assert dense_reward_vector(t, 1, 3) == (1, 1, 1)
        t = Trajectory(horizon=3, bits=(1, 1, 0), reach=3)
        assert dense_reward_vector(t, 2, 3) == (1, 0)
        t = Trajectory(horizon=3, bits=(0, 0, 0), reach=1)
        assert dense_reward_vector(t, 1, 3) == (0, 0, 0)
        assert dense_reward_vector(t, 2, 2) == (0,)

    def test_dense_reward_index_checks(self):
        from horizonlab.model import Trajectory

        t = Trajectory(horizon=3, bits=(1, 1, 0), reach=3)
        with pytest.raises(ValueError):
            dense_reward_vector(t, 0, 3)
        with pytest.raises(ValueError):
            dense_reward_vector(t, 2, 4)


class TestMaxReliableHorizon:
    def test_geometric_decay(self):
        params = params_from_probabilities([0.9] * 8)
        # 0.9^6 = 0.531 >= 0.5 > 0.9^7
        assert max_reliable_horizon(params, 0.5) == 6

    def test_target_above_first_step(self):
        params = params_from_probabilities([0.6, 0.4])
        assert max_reliable_horizon(params, 0.7) == 0

    def test_two_step_boundary(self):
        params = params_from_probabilities([0.8, 0.4])
        assert max_reliable_horizon(params, 0.3) == 2


class TestGradients:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            H = int(rng.integers(2, 7))
            theta0 = float(rng.uniform(-3, 3))
            depth = rng.uniform(-3, 3, size=H - 1)
            params = PolicyParams(horizon=H, theta_atomic=theta0, theta_depth=tuple(depth))
            d_atomic, d_depth = success_gradients(params)
            for j in range(1, H + 1):
                num = central_difference(
                    lambda x, j=j: step_success(
                        PolicyParams(H, x, tuple(depth)), j
                    ),
                    theta0,
                )
                assert abs(num - d_atomic[j - 1]) <= 1e-6 * max(abs(num), 1e-12)
                if j >= 2:
                    def f(x, j=j):
                        d = depth.copy()
                        d[j - 2] = x
                        return step_success(PolicyParams(H, theta0, tuple(d)), j)

                    num = central_difference(f, float(depth[j - 2]))
                    assert abs(num - d_depth[j - 1]) <= 1e-6 * max(abs(num), 1e-12)

    def test_logistic_logit_roundtrip(self):
        rng = np.random.default_rng(1)
        p = rng.uniform(1e-6, 1 - 1e-6, size=1000)
        np.testing.assert_allclose(logistic(np.vectorize(logit)(p)), p, rtol=1e-12)
