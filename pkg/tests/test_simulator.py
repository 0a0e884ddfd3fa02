import math
import warnings

import numpy as np
import pytest

from qtradeoff.chain import FiniteCutoff, General, build_custom_policy, build_static_policy, evaluate_policy
from qtradeoff.errors import DomainError, NoCertificateError
from qtradeoff.policies import dynamic_policy
from qtradeoff.reward import RewardFunction
from qtradeoff.simulate import replication_seeds, simulate


def within_three_se(estimate, exact, se):
    return abs(estimate - exact) <= 3 * se


class TestExamples:
    def test_static_half(self):
        est = simulate(build_static_policy(0.5), RewardFunction.linear(1.0, 1.0), seed=1)
        assert within_three_se(est.mean_queue, 1.0, est.se_queue)

    def test_dynamic_center_two(self):
        est = simulate(dynamic_policy(0, 2), RewardFunction.power(0.5, 4.0), seed=2)
        assert within_three_se(est.mean_queue, 2.0, est.se_queue)

    def test_threshold_reward(self):
        p = build_custom_policy([2.0] * 3, FiniteCutoff(3), 2.0)
        est = simulate(p, RewardFunction.linear(1.0, 2.0), seed=3)
        assert within_three_se(est.mean_reward, 14 / 15, est.se_reward)

    def test_general_tail(self):
        p = build_custom_policy([1.5, 1.2], General(lambda q: 0.5), 2.0)
        f = RewardFunction.linear(1.0, 2.0)
        exact = evaluate_policy(p, f, 1.0)
        est = simulate(p, f, horizon=5e4, seed=4)
        assert within_three_se(est.mean_queue, exact.expected_queue, est.se_queue)


class TestEstimator:
    def test_bit_identical_given_seed(self):
        p, f = dynamic_policy(1, 5), RewardFunction.quadratic(-1.0, 5.0, 0.0, 4.0)
        a = simulate(p, f, horizon=2e4, replications=5, seed=123)
        b = simulate(p, f, horizon=2e4, replications=5, seed=123)
        assert a == b

    def test_seed_changes_estimate(self):
        p, f = build_static_policy(0.7), RewardFunction.linear(1.0, 1.0)
        a = simulate(p, f, horizon=2e4, replications=5, seed=1)
        b = simulate(p, f, horizon=2e4, replications=5, seed=2)
        assert a.mean_queue != b.mean_queue

    def test_replication_seeds_are_distinct(self):
        seeds = replication_seeds(2**64 - 1, 50)
        assert len(set(seeds)) == 50
        assert all(0 <= s < 2**32 for s in seeds)

    def test_standard_error_shrinks(self):
        p, f = build_static_policy(0.6), RewardFunction.linear(1.0, 1.0)
        small = simulate(p, f, horizon=1e4, replications=25, seed=10)
        large = simulate(p, f, horizon=1e4, replications=100, seed=11)
        assert large.se_queue / small.se_queue == pytest.approx(0.5, rel=0.3)

    def test_single_replication_has_no_se(self):
        est = simulate(build_static_policy(0.5), RewardFunction.linear(1.0, 1.0),
                       horizon=1e3, replications=1)
        assert math.isnan(est.se_queue) and math.isnan(est.se_reward)
        assert np.isfinite(est.mean_queue)

    def test_records_settings(self):
        est = simulate(build_static_policy(0.5), RewardFunction.linear(1.0, 1.0),
                       horizon=1e3, warmup_fraction=0.1, replications=3, seed=7)
        assert (est.horizon, est.warmup_fraction, est.replications, est.seed) == (1e3, 0.1, 3, 7)
        assert est.se_queue >= 0 and est.se_reward >= 0


class TestRefusals:
    def test_absorbed_at_empty(self):
        f = RewardFunction.linear(1.0, 1.0)
        with pytest.warns(UserWarning, match="absorbed"):
            est = simulate(build_static_policy(0.0), f, horizon=1e3, replications=4)
        assert est.mean_queue == 0.0
        assert est.mean_reward == 0.0

    def test_unstable_general_tail(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = build_custom_policy([], General(lambda q: 1.5), 2.0)
        with pytest.raises(NoCertificateError):
            simulate(p, RewardFunction.linear(1.0, 2.0), horizon=1e3)

    @pytest.mark.parametrize("kwargs", [
        {"horizon": 0.0},
        {"warmup_fraction": 1.0},
        {"warmup_fraction": -0.1},
        {"replications": 0},
        {"seed": -1},
        {"seed": 2**64},
    ])
    def test_bad_arguments(self, kwargs):
        with pytest.raises(DomainError):
            simulate(build_static_policy(0.5), RewardFunction.linear(1.0, 1.0), **kwargs)
