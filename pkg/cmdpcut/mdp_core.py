"""
Exact finite-MDP machinery.

Policy evaluation (plain and entropy-regularized), soft Q-values, discounted
visitation distributions, discounted entropy and Lagrangian values. Every
quantity comes from one dense LU solve of size |S|; nothing is sampled.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import softmax, xlogy

from .errors import CmdpError, DimensionError, InvalidInstanceError, InvalidParameterError

logger = logging.getLogger('cmdpcut.mdp_core')

ROW_SUM_TOL = 1e-12


def _readonly(values):
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class TabularCmdp:
    """
    Finite CMDP: kernel P(s'|s,a) as an (S, A, S) array, m+1 reward tables
    r_i(s,a) stacked as (m+1, S, A), thresholds c (m,), discount and initial
    distribution. Reward 0 is the objective, 1..m are constraints V_i >= c_i.
    """
    kernel: np.ndarray
    rewards: np.ndarray
    thresholds: np.ndarray
    gamma: float
    rho: np.ndarray
    r_max: np.ndarray = field(init=False, repr=False)
    big_r_max: float = field(init=False, repr=False)

    def __post_init__(self):
        kernel = _readonly(self.kernel)
        rewards = _readonly(self.rewards)
        thresholds = _readonly(np.atleast_1d(np.asarray(self.thresholds, dtype=float)).reshape(-1))
        rho = _readonly(self.rho)
        gamma = float(self.gamma)

        if kernel.ndim != 3 or kernel.shape[0] != kernel.shape[2]:
            raise InvalidInstanceError(f"kernel must have shape (S, A, S), got {kernel.shape}")
        n_states, n_actions = kernel.shape[0], kernel.shape[1]
        if n_states < 1 or n_actions < 1:
            raise InvalidInstanceError("instance needs at least one state and one action")
        if rewards.ndim != 3 or rewards.shape[1:] != (n_states, n_actions) or rewards.shape[0] < 1:
            raise InvalidInstanceError(
                f"rewards must have shape (m+1, {n_states}, {n_actions}), got {rewards.shape}")
        if thresholds.shape != (rewards.shape[0] - 1,):
            raise InvalidInstanceError(
                f"expected {rewards.shape[0] - 1} thresholds, got {thresholds.shape[0]}")
        if rho.shape != (n_states,):
            raise InvalidInstanceError(f"rho must have length {n_states}, got shape {rho.shape}")
        if not 0.0 <= gamma < 1.0:
            raise InvalidInstanceError(f"gamma must lie in [0, 1), got {gamma}")

        for name, array in (("kernel", kernel), ("rewards", rewards),
                            ("thresholds", thresholds), ("rho", rho)):
            if not np.all(np.isfinite(array)):
                raise InvalidInstanceError(f"{name} contains non-finite entries")
        if np.any(kernel < 0):
            raise InvalidInstanceError("kernel has negative transition probabilities")
        row_error = np.abs(kernel.sum(axis=2) - 1.0)
        if np.any(row_error > ROW_SUM_TOL):
            s, a = np.unravel_index(np.argmax(row_error), row_error.shape)
            raise InvalidInstanceError(f"kernel row ({s}, {a}) sums to {kernel[s, a].sum()!r}")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_SUM_TOL:
            raise InvalidInstanceError(f"rho must be a distribution, sums to {rho.sum()!r}")
        if np.any(rewards < 0):
            raise InvalidInstanceError("rewards must be nonnegative")

        r_max = _readonly(rewards.reshape(rewards.shape[0], -1).max(axis=1))
        object.__setattr__(self, 'kernel', kernel)
        object.__setattr__(self, 'rewards', rewards)
        object.__setattr__(self, 'thresholds', thresholds)
        object.__setattr__(self, 'rho', rho)
        object.__setattr__(self, 'gamma', gamma)
        object.__setattr__(self, 'r_max', r_max)
        object.__setattr__(self, 'big_r_max', float(math.sqrt(float(np.sum(r_max[1:] ** 2)))))

    @property
    def n_states(self):
        return self.kernel.shape[0]

    @property
    def n_actions(self):
        return self.kernel.shape[1]

    @property
    def m(self):
        """Number of constraints."""
        return self.rewards.shape[0] - 1

    @property
    def kernel_matrix(self):
        """The kernel as an (S*A, S) matrix, row s*A + a."""
        return self.kernel.reshape(self.n_states * self.n_actions, self.n_states)

    def combined_reward(self, lam):
        """r_0 + sum_i lam_i r_i."""
        lam = check_dual_vector(self, lam)
        return self.rewards[0] + np.tensordot(lam, self.rewards[1:], axes=1)

    def with_thresholds(self, thresholds):
        return replace(self, thresholds=thresholds)


@dataclass(frozen=True, eq=False)
class Policy:
    """Row-stochastic table pi(a|s) of shape (S, A)."""
    probs: np.ndarray

    def __post_init__(self):
        probs = _readonly(self.probs)
        if probs.ndim != 2:
            raise DimensionError(f"policy must be a 2-D table, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise InvalidInstanceError("policy entries must be finite and nonnegative")
        row_error = np.abs(probs.sum(axis=1) - 1.0)
        if np.any(row_error > ROW_SUM_TOL):
            s = int(np.argmax(row_error))
            raise InvalidInstanceError(f"policy row {s} sums to {probs[s].sum()!r}")
        object.__setattr__(self, 'probs', probs)

    @property
    def n_states(self):
        return self.probs.shape[0]

    @property
    def n_actions(self):
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states, n_actions):
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def from_logits(cls, theta):
        """Softmax parametrization: pi(a|s) = exp(theta_sa) / sum_b exp(theta_sb)."""
        return cls(softmax(np.asarray(theta, dtype=float), axis=1))

    @classmethod
    def deterministic(cls, actions, n_actions):
        actions = np.asarray(actions, dtype=int)
        probs = np.zeros((actions.shape[0], n_actions))
        probs[np.arange(actions.shape[0]), actions] = 1.0
        return cls(probs)

    @classmethod
    def from_weights(cls, weights, mass_floor=1e-12):
        """Normalize nonnegative row weights; rows without mass become uniform."""
        weights = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        mass = weights.sum(axis=1, keepdims=True)
        uniform = np.full_like(weights, 1.0 / weights.shape[1])
        with np.errstate(invalid='ignore', divide='ignore'):
            probs = np.where(mass > mass_floor, weights / mass, uniform)
        return cls(probs)

    @property
    def logits(self):
        """theta = log pi, with -inf where pi is zero."""
        with np.errstate(divide='ignore'):
            return np.log(self.probs)

    def max_abs_diff(self, other):
        return float(np.max(np.abs(self.probs - other.probs)))


@dataclass(frozen=True, eq=False)
class ValueReport:
    """Result of one exact evaluation; soft_q is plain Q when tau == 0."""
    per_state_values: np.ndarray
    scalar_value: float
    soft_q: np.ndarray
    entropy: float
    visitation: np.ndarray
    tau: float = 0.0


def check_dual_vector(cmdp, lam):
    lam = np.atleast_1d(np.asarray(lam, dtype=float)).reshape(-1)
    if lam.shape != (cmdp.m,):
        raise DimensionError(f"dual vector must have length {cmdp.m}, got {lam.shape[0]}")
    return lam


def _check_policy(cmdp, policy):
    if policy.probs.shape != (cmdp.n_states, cmdp.n_actions):
        raise DimensionError(
            f"policy shape {policy.probs.shape} does not match instance "
            f"({cmdp.n_states}, {cmdp.n_actions})")


def _check_reward(cmdp, reward):
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (cmdp.n_states, cmdp.n_actions):
        raise DimensionError(
            f"reward shape {reward.shape} does not match instance "
            f"({cmdp.n_states}, {cmdp.n_actions})")
    return reward


def _policy_system(cmdp, policy):
    """LU factors of I - gamma * P_pi."""
    _check_policy(cmdp, policy)
    p_pi = np.einsum('sa,sat->st', policy.probs, cmdp.kernel)
    matrix = np.eye(cmdp.n_states) - cmdp.gamma * p_pi
    return lu_factor(matrix, check_finite=False)


def _solved(values):
    if not np.all(np.isfinite(values)):
        raise CmdpError("singular Bellman system; gamma must be < 1")
    return values


def _state_visitation(cmdp, factors):
    d = _solved(lu_solve(factors, (1.0 - cmdp.gamma) * cmdp.rho, trans=1, check_finite=False))
    return np.clip(d, 0.0, None)


def _state_entropy(policy):
    return -xlogy(policy.probs, policy.probs).sum(axis=1)


def evaluate(cmdp, policy, reward, tau=0.0):
    """
    Solve (I - gamma P_pi) V = r_pi with r_pi(s) = sum_a pi(a|s)[r(s,a) - tau log pi(a|s)].
    0 log 0 is taken as 0.
    """
    if tau < 0:
        raise InvalidParameterError(f"tau must be nonnegative, got {tau}")
    reward = _check_reward(cmdp, reward)
    factors = _policy_system(cmdp, policy)

    state_entropy = _state_entropy(policy)
    r_pi = np.sum(policy.probs * reward, axis=1) + tau * state_entropy
    values = _solved(lu_solve(factors, r_pi, check_finite=False))
    soft_q = reward + cmdp.gamma * (cmdp.kernel @ values)

    d = _state_visitation(cmdp, factors)
    visitation = d[:, None] * policy.probs
    entropy = float(state_entropy @ d) / (1.0 - cmdp.gamma)

    return ValueReport(
        per_state_values=values,
        scalar_value=float(cmdp.rho @ values),
        soft_q=soft_q,
        entropy=entropy,
        visitation=visitation,
        tau=float(tau),
    )


def visitation(cmdp, policy):
    """nu(s,a) = d(s) pi(a|s) with d = (1 - gamma) rho + gamma P_pi^T d."""
    factors = _policy_system(cmdp, policy)
    return _state_visitation(cmdp, factors)[:, None] * policy.probs


def entropy_reward(policy):
    """Reward table -log pi(a|s), zero where pi(a|s) = 0."""
    probs = policy.probs
    return -np.log(probs, where=probs > 0, out=np.zeros_like(probs))


def discounted_entropy(cmdp, policy):
    return evaluate(cmdp, policy, entropy_reward(policy), tau=0.0).scalar_value


def constraint_values(cmdp, policy):
    """(V_0(rho), ..., V_m(rho)) from a single factorization."""
    factors = _policy_system(cmdp, policy)
    r_pi = np.einsum('sa,isa->si', policy.probs, cmdp.rewards)
    values = _solved(lu_solve(factors, r_pi, check_finite=False))
    return cmdp.rho @ values


def lagrangian(cmdp, policy, lam, tau=0.0):
    """L_tau(pi, lam) = V_0 + <lam, V - c> + tau H(pi), assembled from components."""
    lam = check_dual_vector(cmdp, lam)
    values = constraint_values(cmdp, policy)
    result = values[0] + float(lam @ (values[1:] - cmdp.thresholds))
    if tau > 0:
        result += tau * discounted_entropy(cmdp, policy)
    return float(result)


def lagrangian_combined(cmdp, policy, lam, tau=0.0):
    """Same value via one soft evaluation of r_0 + <lam, r>, minus <lam, c>."""
    lam = check_dual_vector(cmdp, lam)
    report = evaluate(cmdp, policy, cmdp.combined_reward(lam), tau=tau)
    return report.scalar_value - float(lam @ cmdp.thresholds)
