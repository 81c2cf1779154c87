import numpy as np
import numpy.testing as npt
import pytest

from hypx.base_models import mlp_forward
from hypx.environments import (
    GaussianBanditEnv,
    NnBanditEnv,
    SparseLinearBanditEnv,
    bisection_sublists,
    env_new,
)
from hypx.numerics import ConfigurationError, ContractError, RngStream


class TestBisection:
    def test_eight(self):
        assert bisection_sublists(8) == [(0, 4), (4, 8), (0, 2), (2, 4), (4, 6), (6, 8)]

    def test_odd_gives_extra_to_first_half(self):
        assert bisection_sublists(5) == [(0, 3), (3, 5), (0, 2)]

    @pytest.mark.parametrize("n", [4, 5, 7, 8, 16, 31, 32, 64])
    def test_count(self, n):
        assert len(bisection_sublists(n)) == n - 2


class TestSparse:
    def test_action_set_and_rewards(self):
        env = SparseLinearBanditEnv(8, RngStream(3))
        assert env.actions.shape == (8 + 6, 8)
        assert env.optimal_reward == 1.0
        # half-weight sublists containing the spike pay 0.5
        for i, (lo, hi) in enumerate(env.sublists):
            assert env.expected_rewards[8 + i] == (0.5 if lo <= env.spike < hi else 0.0)

    def test_too_small(self):
        with pytest.raises(ConfigurationError):
            SparseLinearBanditEnv(3, RngStream(0))


class TestGaussian:
    def test_regret_and_noise(self):
        env = GaussianBanditEnv(4, RngStream(1), noise_std=0.0)
        best = int(np.argmax(env.theta))
        assert env.regret(best) == 0.0
        assert env.step(best, RngStream(2)) == env.theta[best]
        npt.assert_array_equal(env.actions, np.eye(4))

    def test_out_of_range_action(self):
        env = GaussianBanditEnv(2, RngStream(1))
        with pytest.raises(ContractError):
            env.regret(2)

    def test_prior_spread(self):
        thetas = np.concatenate([GaussianBanditEnv(10, RngStream(s)).theta for s in range(300)])
        npt.assert_allclose(thetas.var(), 2.25, rtol=0.1)


class TestNn:
    def test_rewards_from_generator(self):
        env = NnBanditEnv(50, RngStream(4))
        npt.assert_allclose(np.linalg.norm(env.actions, axis=1), 1.0, atol=1e-12)
        npt.assert_allclose(env.expected_rewards, mlp_forward(env.arch, env.generator, env.actions))
        assert env.arch.param_count == 79

    def test_descriptor(self):
        d = NnBanditEnv(5, RngStream(0)).descriptor()
        assert d["hidden"] == [3, 3] and d["n_actions"] == 5


class TestFactory:
    def test_known_kinds(self):
        assert env_new("gaussian", {"n_arms": 3}, RngStream(0)).n_actions == 3
        assert env_new("sparse", {"dim": 4}, RngStream(0)).n_actions == 6
        assert env_new("nn", {"n_actions": 7}, RngStream(0)).n_actions == 7

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            env_new("contextual", {}, RngStream(0))
        with pytest.raises(ConfigurationError):
            env_new("gaussian", {}, RngStream(0))


class TestStepStatistics:
    def test_fixed_arm_sample_mean(self):
        env = GaussianBanditEnv(3, RngStream(8))
        rng = RngStream(9)
        ys = np.array([env.step(1, rng) for _ in range(10_000)])
        assert abs(ys.mean() - env.expected_rewards[1]) <= 4 * env.noise_std / 100

    def test_sparse_regrets(self):
        env = SparseLinearBanditEnv(4, RngStream(1), noise_std=0.0)
        assert env.step(env.spike, RngStream(0)) == 1.0
        other = (env.spike + 1) % 4
        assert env.regret(other) == 1.0
        covering = [4 + i for i, (lo, hi) in enumerate(env.sublists) if lo <= env.spike < hi]
        assert [env.regret(a) for a in covering] == [0.5]
        assert int(np.sum(env.expected_rewards == env.optimal_reward)) == 1
