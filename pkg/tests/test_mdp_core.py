import math

import numpy as np
import pytest

from cmdpcut.errors import DimensionError, InvalidInstanceError, InvalidParameterError
from cmdpcut.mdp_core import (Policy, TabularCmdp, constraint_values, discounted_entropy, entropy_reward,
                              evaluate, lagrangian, lagrangian_combined, visitation)
from cmdpcut.oracles import rollout_value, rollout_visitation


def _random_policy(rng, n_states, n_actions):
    return Policy.from_logits(2.0 * rng.normal(size=(n_states, n_actions)))


def test_single_action_value_is_geometric_series():
    cmdp = TabularCmdp(np.ones((1, 1, 1)), np.ones((1, 1, 1)), [], 0.9, [1.0])
    report = evaluate(cmdp, Policy.uniform(1, 1), cmdp.rewards[0])
    assert report.scalar_value == pytest.approx(10.0, abs=1e-12)


def test_pure_entropy_value(single_state_cmdp):
    cmdp = single_state_cmdp(r0=(0.0, 0.0), constraints=(), thresholds=(), gamma=0.5)
    report = evaluate(cmdp, Policy.uniform(1, 2), cmdp.rewards[0], tau=1.0)
    assert report.scalar_value == pytest.approx(2.0 * math.log(2.0), abs=1e-12)


def test_value_matches_truncated_rollout(random_cmdp):
    cmdp = random_cmdp(42, n_states=3, n_actions=2)
    policy = _random_policy(np.random.default_rng(42), 3, 2)
    for i in range(cmdp.m + 1):
        report = evaluate(cmdp, policy, cmdp.rewards[i])
        assert report.scalar_value == pytest.approx(rollout_value(cmdp, policy, cmdp.rewards[i]), abs=1e-8)


def test_single_state_visitation_is_the_policy(single_state_cmdp):
    cmdp = single_state_cmdp(gamma=0.7)
    policy = Policy(np.array([[0.3, 0.7]]))
    np.testing.assert_allclose(visitation(cmdp, policy), policy.probs, atol=1e-12)


def test_visitation_without_discounting_is_initial_distribution(random_cmdp):
    cmdp = random_cmdp(3, gamma=1e-12)
    policy = _random_policy(np.random.default_rng(3), cmdp.n_states, cmdp.n_actions)
    np.testing.assert_allclose(visitation(cmdp, policy), cmdp.rho[:, None] * policy.probs, atol=1e-9)


def test_visitation_matches_distribution_propagation(random_cmdp):
    cmdp = random_cmdp(7, n_states=4, n_actions=3)
    policy = _random_policy(np.random.default_rng(7), 4, 3)
    nu = visitation(cmdp, policy)
    np.testing.assert_allclose(nu, rollout_visitation(cmdp, policy), atol=1e-8)
    assert nu.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_value_visitation_identity(random_cmdp, seed):
    cmdp = random_cmdp(seed, n_states=5, n_actions=3, m=2)
    policy = _random_policy(np.random.default_rng(seed), 5, 3)
    nu = visitation(cmdp, policy)
    values = constraint_values(cmdp, policy)
    for i in range(cmdp.m + 1):
        assert (1.0 - cmdp.gamma) * values[i] == pytest.approx(float(np.sum(nu * cmdp.rewards[i])), abs=1e-9)


def test_deterministic_policy_has_no_entropy(random_cmdp):
    cmdp = random_cmdp(1)
    assert discounted_entropy(cmdp, Policy.deterministic([0, 1, 1, 0], 2)) == pytest.approx(0.0, abs=1e-15)


def test_uniform_policy_entropy(random_cmdp):
    cmdp = random_cmdp(2, n_actions=4, gamma=0.9)
    assert discounted_entropy(cmdp, Policy.uniform(4, 4)) == pytest.approx(math.log(4) / 0.1, rel=1e-12)


def test_mixed_policy_entropy_matches_visitation_identity(random_cmdp):
    cmdp = random_cmdp(5, n_actions=3)
    policy = _random_policy(np.random.default_rng(5), cmdp.n_states, 3)
    expected = float(np.sum(visitation(cmdp, policy) * entropy_reward(policy))) / (1.0 - cmdp.gamma)
    entropy = discounted_entropy(cmdp, policy)
    assert entropy == pytest.approx(expected, abs=1e-9)
    assert 0.0 <= entropy <= math.log(3) / (1.0 - cmdp.gamma)


def test_entropy_reward_is_zero_on_unused_actions():
    reward = entropy_reward(Policy(np.array([[1.0, 0.0], [0.5, 0.5]])))
    np.testing.assert_allclose(reward, [[0.0, 0.0], [math.log(2), math.log(2)]])


def test_soft_value_satisfies_bellman_identity(random_cmdp):
    cmdp = random_cmdp(11, n_actions=3)
    policy = _random_policy(np.random.default_rng(11), cmdp.n_states, 3)
    tau = 0.3
    report = evaluate(cmdp, policy, cmdp.rewards[0], tau=tau)
    probs = policy.probs
    expected = np.sum(probs * (report.soft_q - tau * np.log(probs)), axis=1)
    np.testing.assert_allclose(report.per_state_values, expected, atol=1e-10)


def test_lagrangian_reduces_to_objective(random_cmdp):
    cmdp = random_cmdp(4, m=2)
    policy = Policy.uniform(cmdp.n_states, cmdp.n_actions)
    assert lagrangian(cmdp, policy, [0.0, 0.0]) == pytest.approx(constraint_values(cmdp, policy)[0], abs=1e-12)


def test_lagrangian_closed_form_at_zero_discount(single_state_cmdp):
    cmdp = single_state_cmdp()
    policy = Policy(np.array([[0.5, 0.5]]))
    assert lagrangian(cmdp, policy, [2.0]) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_lagrangian_routes_agree(random_cmdp, seed):
    cmdp = random_cmdp(seed, n_states=5, n_actions=3, m=2, thresholds=[0.3, 0.8])
    rng = np.random.default_rng(100 + seed)
    policy = _random_policy(rng, 5, 3)
    lam = 3.0 * rng.random(2)
    assert lagrangian(cmdp, policy, lam, tau=0.2) == pytest.approx(
        lagrangian_combined(cmdp, policy, lam, tau=0.2), abs=1e-9)


def test_derived_reward_constants():
    rewards = np.array([[[0.2, 3.0]], [[0.5, 0.1]], [[1.2, 0.4]]])
    cmdp = TabularCmdp(np.ones((1, 2, 1)), rewards, [0.0, 0.0], 0.5, [1.0])
    np.testing.assert_allclose(cmdp.r_max, [3.0, 0.5, 1.2])
    assert cmdp.big_r_max == pytest.approx(math.sqrt(0.25 + 1.44))
    assert cmdp.m == 2


def test_instance_arrays_are_read_only(random_cmdp):
    cmdp = random_cmdp(0)
    with pytest.raises(ValueError):
        cmdp.kernel[0, 0, 0] = 1.0


def test_invalid_instances_are_rejected():
    kernel = np.ones((1, 1, 1))
    with pytest.raises(InvalidInstanceError):
        TabularCmdp(kernel * 0.9, np.ones((1, 1, 1)), [], 0.5, [1.0])
    with pytest.raises(InvalidInstanceError):
        TabularCmdp(kernel, np.ones((1, 1, 1)), [], 1.0, [1.0])
    with pytest.raises(InvalidInstanceError):
        TabularCmdp(kernel, -np.ones((1, 1, 1)), [], 0.5, [1.0])
    with pytest.raises(InvalidInstanceError):
        TabularCmdp(kernel, np.ones((2, 1, 1)), [], 0.5, [1.0])


def test_shape_mismatches_raise(random_cmdp):
    cmdp = random_cmdp(0)
    with pytest.raises(DimensionError):
        evaluate(cmdp, Policy.uniform(3, 2), cmdp.rewards[0])
    with pytest.raises(DimensionError):
        cmdp.combined_reward([1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        evaluate(cmdp, Policy.uniform(4, 2), cmdp.rewards[0], tau=-1.0)


def test_from_weights_fills_empty_rows_uniformly():
    policy = Policy.from_weights(np.array([[0.0, 0.0, 0.0], [1.0, 3.0, 0.0]]))
    np.testing.assert_allclose(policy.probs, [[1 / 3, 1 / 3, 1 / 3], [0.25, 0.75, 0.0]])
