"""
Exact entropy-regularized natural policy gradient.

The update is closed form in probability space:
    pi'(a|s) ∝ pi(a|s)^(1 - eta*tau/(1-gamma)) * exp(eta*Q_tau(s,a)/(1-gamma)).
With the default eta = (1-gamma)/tau the old policy drops out and pi' is the
softmax of Q_tau/tau.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .errors import NpgError
from .mdp_core import Policy, ValueReport, evaluate

logger = logging.getLogger('cmdpcut.npg')

EXPONENT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class NpgResult:
    policy: Policy
    iterations_used: int
    policy_gap_bound: float
    value_gap_bound: float
    r_scale: float
    c1: float
    report: ValueReport


def _check_tau(tau):
    if not (tau > 0 and math.isfinite(tau)):
        raise NpgError(f"tau must be positive and finite, got {tau}")


def max_learning_rate(tau, gamma):
    return (1.0 - gamma) / tau


def npg_step(policy, soft_q, eta, tau, gamma):
    _check_tau(tau)
    eta_max = max_learning_rate(tau, gamma)
    if not 0.0 < eta <= eta_max * (1.0 + 1e-12):
        raise NpgError(f"learning rate must lie in (0, {eta_max:g}], got {eta}")
    soft_q = np.asarray(soft_q, dtype=float)
    if soft_q.shape != policy.probs.shape:
        raise NpgError(f"soft Q shape {soft_q.shape} does not match policy {policy.probs.shape}")

    keep = 1.0 - eta * tau / (1.0 - gamma)
    logits = eta * soft_q / (1.0 - gamma)
    if abs(keep) >= EXPONENT_FLOOR:
        # zero-probability actions stay at -inf
        logits = logits + keep * policy.logits
    return Policy.from_logits(logits)


def npg_iterates(cmdp, reward, tau, n_iter, eta=None, initial=None):
    """
    Yield (t, pi_t, report_t) for t = 0..n_iter, where report_t is the exact
    soft evaluation of pi_t. pi_0 is uniform unless given.
    """
    _check_tau(tau)
    if eta is None:
        eta = max_learning_rate(tau, cmdp.gamma)
    policy = initial if initial is not None else Policy.uniform(cmdp.n_states, cmdp.n_actions)
    for t in range(n_iter + 1):
        report = evaluate(cmdp, policy, reward, tau=tau)
        yield t, policy, report
        if t < n_iter:
            policy = npg_step(policy, report.soft_q, eta, tau, cmdp.gamma)


def c1_upper_bound(tau_scaled, n_actions, gamma):
    """Bound on ||Q*_tau - Q^(0)_tau||_inf for rewards in [0, 1]."""
    return (1.0 + tau_scaled * math.log(n_actions)) / (1.0 - gamma)


def npg_iteration_bound(c1, r_scale, delta, tau, gamma):
    """ceil((log(2 c1 R) + log(1/delta) + log(1/tau)) / log(1/gamma)) + 1, at least 1."""
    if gamma == 0.0:
        return 1
    numerator = math.log(2.0 * c1 * r_scale) - math.log(delta) - math.log(tau)
    steps = math.ceil(numerator / -math.log(gamma) - 1e-12) + 1
    return max(int(steps), 1)


def regularized_softmax(x, tau):
    """S_tau(x) = softmax(x / tau) along the last axis."""
    _check_tau(tau)
    return softmax(np.asarray(x, dtype=float) / tau, axis=-1)


def run_npg(cmdp, reward, tau, delta):
    """
    Approximate the regularized optimum of `reward` to delta in policy sup-norm.

    Rewards are rescaled by R = max(max r, 1) so they lie in [0, 1]; tau is
    rescaled alongside, which leaves the optimal policy unchanged.
    """
    _check_tau(tau)
    if not 0.0 < delta < 1.0:
        raise NpgError(f"delta must lie in (0, 1), got {delta}")
    reward = np.asarray(reward, dtype=float)
    if reward.shape != (cmdp.n_states, cmdp.n_actions):
        raise NpgError(f"reward shape {reward.shape} does not match instance")
    if not np.all(np.isfinite(reward)):
        raise NpgError("reward contains non-finite entries")
    if np.any(reward < 0):
        raise NpgError("reward must be nonnegative")

    r_scale = max(float(reward.max()), 1.0)
    tau_scaled = tau / r_scale
    c1 = c1_upper_bound(tau_scaled, cmdp.n_actions, cmdp.gamma)
    n_iter = npg_iteration_bound(c1, r_scale, delta, tau, cmdp.gamma)

    policy = None
    for _, policy, _ in npg_iterates(cmdp, reward / r_scale, tau_scaled, n_iter):
        pass
    logger.debug(f"NPG: R={r_scale:.4g} tau={tau:.3g} delta={delta:.3g} iterations={n_iter}")

    return NpgResult(
        policy=policy,
        iterations_used=n_iter,
        policy_gap_bound=float(delta),
        value_gap_bound=6.0 * tau * cmdp.gamma * delta,
        r_scale=r_scale,
        c1=c1,
        report=evaluate(cmdp, policy, reward, tau=tau),
    )
