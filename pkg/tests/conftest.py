import numpy as np
import pytest

from cmdpcut.instances import InstanceSpec, generate_instance
from cmdpcut.mdp_core import TabularCmdp


@pytest.fixture
def single_state_cmdp():
    """One state, |A| = len(r0); constraint rewards and thresholds given per row."""
    def make(r0=(1.0, 0.0), constraints=((0.0, 1.0),), thresholds=(0.5,), gamma=0.0):
        n_actions = len(r0)
        kernel = np.ones((1, n_actions, 1))
        rewards = np.array([r0] + [list(row) for row in constraints], dtype=float).reshape(-1, 1, n_actions)
        return TabularCmdp(kernel, rewards, np.array(thresholds, dtype=float), gamma, np.ones(1))
    return make


@pytest.fixture
def random_cmdp():
    """Dense random kernel, rewards in [0, 1), thresholds 0 unless given."""
    def make(seed, n_states=4, n_actions=2, m=1, gamma=0.9, thresholds=None):
        rng = np.random.default_rng(seed)
        kernel = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        kernel /= kernel.sum(axis=2, keepdims=True)
        rewards = rng.random((m + 1, n_states, n_actions))
        rho = rng.dirichlet(np.ones(n_states))
        rho /= rho.sum()
        if thresholds is None:
            thresholds = np.zeros(m)
        return TabularCmdp(kernel, rewards, thresholds, gamma, rho)
    return make


@pytest.fixture
def iid_kernel_cmdp():
    def make(seed, n_states=5, n_actions=3, m=1, gamma=0.8):
        return generate_instance(InstanceSpec(seed=seed, n_states=n_states, n_actions=n_actions,
                                              m=m, gamma=gamma, iid_kernel=True))
    return make
