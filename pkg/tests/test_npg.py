import math

import numpy as np
import pytest

from cmdpcut.errors import NpgError
from cmdpcut.mdp_core import Policy
from cmdpcut.npg import (c1_upper_bound, max_learning_rate, npg_iterates, npg_iteration_bound, npg_step,
                         regularized_softmax, run_npg)
from cmdpcut.oracles import soft_value_iteration


def test_constant_q_gives_uniform_policy():
    policy = Policy(np.array([[0.9, 0.1], [0.2, 0.8]]))
    updated = npg_step(policy, np.full((2, 2), 3.0), eta=0.5, tau=1.0, gamma=0.5)
    np.testing.assert_allclose(updated.probs, 0.5, atol=1e-15)


def test_max_step_is_softmax_of_q():
    policy = Policy(np.array([[0.5, 0.5]]))
    updated = npg_step(policy, np.array([[1.0, 0.0]]), eta=max_learning_rate(1.0, 0.5), tau=1.0, gamma=0.5)
    e = math.e
    np.testing.assert_allclose(updated.probs, [[e / (e + 1), 1 / (e + 1)]], atol=1e-15)


def test_small_step_keeps_part_of_old_policy():
    policy = Policy(np.array([[0.9, 0.1]]))
    q = np.array([[0.0, 1.0]])
    updated = npg_step(policy, q, eta=0.25, tau=1.0, gamma=0.5)
    logits = 0.5 * np.log([0.9, 0.1]) + 0.5 * q[0]
    np.testing.assert_allclose(updated.probs[0], np.exp(logits) / np.exp(logits).sum(), atol=1e-14)


def test_learning_rate_above_limit_is_rejected():
    policy = Policy.uniform(1, 2)
    with pytest.raises(NpgError):
        npg_step(policy, np.zeros((1, 2)), eta=2.0, tau=1.0, gamma=0.5)
    with pytest.raises(NpgError):
        npg_step(policy, np.zeros((1, 2)), eta=0.1, tau=0.0, gamma=0.5)


def test_single_state_optimum_is_softmax_of_rewards(single_state_cmdp):
    cmdp = single_state_cmdp(constraints=(), thresholds=(), gamma=0.9)
    result = run_npg(cmdp, cmdp.rewards[0], tau=0.5, delta=1e-6)
    e2 = math.e ** 2
    np.testing.assert_allclose(result.policy.probs, [[e2 / (e2 + 1), 1 / (e2 + 1)]], atol=1e-6)


def test_zero_reward_returns_uniform(random_cmdp):
    cmdp = random_cmdp(0, n_actions=3)
    result = run_npg(cmdp, np.zeros((cmdp.n_states, 3)), tau=0.2, delta=1e-6)
    np.testing.assert_allclose(result.policy.probs, 1.0 / 3.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_matches_soft_value_iteration(random_cmdp, seed):
    cmdp = random_cmdp(seed, n_states=5, n_actions=3)
    delta, tau = 1e-6, 0.1
    result = run_npg(cmdp, cmdp.rewards[0], tau=tau, delta=delta)
    optimum = soft_value_iteration(cmdp, cmdp.rewards[0], tau, tol=1e-12)
    assert result.policy.max_abs_diff(optimum.policy) <= 2 * delta
    assert optimum.values @ cmdp.rho - result.report.scalar_value <= result.value_gap_bound + 1e-10


def test_rescaled_rewards_give_the_same_optimum(random_cmdp):
    cmdp = random_cmdp(4, n_states=5, n_actions=3)
    reward = 7.0 * cmdp.rewards[0]
    result = run_npg(cmdp, reward, tau=0.7, delta=1e-7)
    optimum = soft_value_iteration(cmdp, reward, 0.7, tol=1e-12)
    assert result.r_scale == pytest.approx(float(reward.max()))
    assert result.policy.max_abs_diff(optimum.policy) <= 2e-7
    assert result.report.tau == 0.7


def test_iteration_bound_examples():
    assert npg_iteration_bound(1.0, 1.0, 1.0, 1.0, 0.5) == 2
    assert npg_iteration_bound(10.0, 1.0, 1e-4, 0.1, 0.9) == 139
    assert npg_iteration_bound(10.0, 1.0, 1e-4, 0.1, 0.0) == 1


def test_iteration_bound_grows_with_accuracy():
    base = npg_iteration_bound(5.0, 2.0, 1e-4, 0.1, 0.9)
    halved = npg_iteration_bound(5.0, 2.0, 0.5e-4, 0.1, 0.9)
    assert base <= halved <= base + math.ceil(math.log(2) / math.log(1 / 0.9))


def test_c1_bound():
    assert c1_upper_bound(0.5, 4, 0.9) == pytest.approx((1 + 0.5 * math.log(4)) / 0.1)


def test_soft_value_improves_monotonically(random_cmdp):
    cmdp = random_cmdp(8, n_states=5, n_actions=3)
    values = [report.per_state_values for _, _, report in npg_iterates(cmdp, cmdp.rewards[0], 0.1, 20)]
    assert len(values) == 21
    for before, after in zip(values, values[1:]):
        assert np.all(after >= before - 1e-10)


def test_value_gap_bound_formula(random_cmdp):
    cmdp = random_cmdp(2)
    result = run_npg(cmdp, cmdp.rewards[0], tau=0.3, delta=1e-5)
    assert result.value_gap_bound == pytest.approx(6 * 0.3 * 0.9 * 1e-5)
    assert result.policy_gap_bound == 1e-5


def test_run_npg_rejects_bad_input(random_cmdp):
    cmdp = random_cmdp(0)
    with pytest.raises(NpgError):
        run_npg(cmdp, -cmdp.rewards[0], tau=0.1, delta=1e-6)
    with pytest.raises(NpgError):
        run_npg(cmdp, cmdp.rewards[0], tau=0.1, delta=1.5)
    with pytest.raises(NpgError):
        run_npg(cmdp, cmdp.rewards[0][:, :1], tau=0.1, delta=1e-6)


def test_regularized_softmax_sums_to_one():
    probs = regularized_softmax(np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]), 0.5)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    assert probs[0, 2] > probs[0, 1] > probs[0, 0]
