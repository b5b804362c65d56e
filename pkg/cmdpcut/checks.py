"""
Numerical verification suites behind the `check` subcommand.

Every suite draws its own seeded instances and yields one excess per case,
measured minus allowed; a suite passes when its worst excess stays within
the suite's slack.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .cmdp_solver import (DualConfig, b_d, compute_b_lambda, dual_oracle, dual_value_estimate,
                          initial_simplex, l_beta, l_d)
from .cutting_plane import chebyshev_center, leverage_scores
from .errors import InvalidParameterError
from .instances import IID_MIXING, InstanceSpec, generate_instance
from .mdp_core import Policy, constraint_values, discounted_entropy, evaluate, visitation
from .npg import c1_upper_bound, npg_iterates, regularized_softmax
from .oracles import (exact_dual, grid_dual_min, lp_solve_cmdp, occupancy_to_policy,
                      slater_margin, soft_value_iteration)
from .simplex import OPTIMAL

logger = logging.getLogger('cmdpcut.checks')

NUMERIC_SLACK = 1e-7
IDENTITY_SLACK = 1e-9
DANSKIN_SLACK = 5e-3
CHECK_TAU = 0.1
FD_STEP = 1e-4
REGULARIZATION_MU = 0.1


@dataclass(frozen=True)
class CheckResult:
    name: str
    cases: int
    worst_excess: float
    passed: bool


SUITES = {}


def suite(name, slack=NUMERIC_SLACK):
    def register(fn):
        SUITES[name] = (fn, slack)
        return fn
    return register


def _instances(rng, count, m=2, n_states=5, n_actions=3, gamma=0.8, iid_kernel=False):
    for _ in range(count):
        spec = InstanceSpec(seed=int(rng.integers(2 ** 31)), n_states=n_states, n_actions=n_actions,
                            m=m, gamma=gamma, iid_kernel=iid_kernel)
        yield generate_instance(spec)


def _random_policy(rng, cmdp, spread=2.0):
    return Policy.from_logits(spread * rng.normal(size=(cmdp.n_states, cmdp.n_actions)))


def _dual_sample(rng, m, b_lambda):
    """Uniform point of {lam >= 0, ||lam||_1 <= b_lambda}."""
    return b_lambda * rng.dirichlet(np.ones(m + 1))[:m]


def _b_lambda(cmdp):
    return compute_b_lambda(cmdp, slater_margin(cmdp))


@suite("value-visitation-identity", slack=IDENTITY_SLACK)
def value_visitation_identity(rng):
    for cmdp in _instances(rng, 20):
        for _ in range(10):
            policy = _random_policy(rng, cmdp)
            nu = visitation(cmdp, policy)
            values = constraint_values(cmdp, policy)
            for i in range(cmdp.m + 1):
                yield abs((1.0 - cmdp.gamma) * values[i] - float(np.sum(nu * cmdp.rewards[i])))


@suite("soft-value-consistency", slack=IDENTITY_SLACK)
def soft_value_consistency(rng):
    for cmdp in _instances(rng, 10):
        for _ in range(10):
            policy = _random_policy(rng, cmdp)
            tau = float(rng.uniform(0.01, 1.0))
            report = evaluate(cmdp, policy, cmdp.rewards[0], tau=tau)
            probs = policy.probs
            expected = np.sum(probs * report.soft_q, axis=1) - tau * np.sum(xlogy(probs, probs), axis=1)
            yield float(np.max(np.abs(report.per_state_values - expected)))


@suite("entropy-bounds", slack=IDENTITY_SLACK)
def entropy_bounds(rng):
    for cmdp in _instances(rng, 10):
        upper = math.log(cmdp.n_actions) / (1.0 - cmdp.gamma)
        policies = [_random_policy(rng, cmdp, spread) for spread in (0.5, 2.0, 8.0)]
        policies.append(Policy.uniform(cmdp.n_states, cmdp.n_actions))
        policies.append(Policy.deterministic(rng.integers(cmdp.n_actions, size=cmdp.n_states), cmdp.n_actions))
        for policy in policies:
            entropy = discounted_entropy(cmdp, policy)
            yield max(-entropy, entropy - upper)


@suite("leverage-trace", slack=IDENTITY_SLACK)
def leverage_trace(rng):
    for m in (1, 2, 3, 5):
        for _ in range(10):
            polytope = initial_simplex(1.0, m)
            center, radius = chebyshev_center(polytope)
            for _ in range(5):
                normal = rng.normal(size=m)
                polytope.add_plane(normal, normal @ center - radius * float(rng.uniform(0.3, 1.0)) * np.linalg.norm(normal))
            center, radius = chebyshev_center(polytope)
            for _ in range(5):
                direction = rng.normal(size=m)
                point = center + 0.9 * radius * float(rng.random()) * direction / np.linalg.norm(direction)
                yield abs(float(np.sum(leverage_scores(point, polytope))) - m)


@suite("occupancy-round-trip")
def occupancy_round_trip(rng):
    for cmdp in _instances(rng, 10):
        solution = lp_solve_cmdp(cmdp)
        if solution.status == OPTIMAL:
            yield float(np.max(np.abs(visitation(cmdp, solution.policy) - solution.occupancy)))
        for _ in range(5):
            policy = _random_policy(rng, cmdp)
            recovered = occupancy_to_policy(visitation(cmdp, policy))
            yield policy.max_abs_diff(recovered)


@suite("npg-linear-convergence", slack=IDENTITY_SLACK)
def npg_linear_convergence(rng):
    tau, n_iter = CHECK_TAU, 60
    for cmdp in _instances(rng, 10, m=0, gamma=0.9):
        reward = cmdp.rewards[0]
        optimum = soft_value_iteration(cmdp, reward, tau, tol=1e-12)
        c1 = c1_upper_bound(tau, cmdp.n_actions, cmdp.gamma)
        for t, policy, report in npg_iterates(cmdp, reward, tau, n_iter):
            yield float(np.max(np.abs(optimum.soft_q - report.soft_q))) - c1 * cmdp.gamma ** t
            if t >= 1:
                log_gap = float(np.max(np.abs(optimum.policy.logits - policy.logits)))
                yield log_gap - 2.0 * c1 / tau * cmdp.gamma ** (t - 1)
                value_gap = float(np.max(np.abs(optimum.values - report.per_state_values)))
                yield value_gap - 3.0 * c1 * cmdp.gamma ** t


@suite("softmax-lipschitz", slack=IDENTITY_SLACK)
def softmax_lipschitz(rng):
    for _ in range(1000):
        size = int(rng.integers(2, 7))
        tau = float(rng.uniform(0.05, 1.0))
        x = 3.0 * rng.normal(size=size)
        y = x + rng.normal(size=size) * float(rng.choice([1e-3, 0.1, 1.0]))
        spread = float(np.sum(np.abs(regularized_softmax(x, tau) - regularized_softmax(y, tau))))
        yield spread - float(np.max(np.abs(x - y))) / tau


@suite("policy-lipschitz")
def policy_lipschitz(rng):
    tau = CHECK_TAU
    for cmdp in _instances(rng, 4):
        b_lambda = _b_lambda(cmdp)
        constant = cmdp.big_r_max / ((1.0 - cmdp.gamma) * tau)
        for _ in range(25):
            first, second = _dual_sample(rng, cmdp.m, b_lambda), _dual_sample(rng, cmdp.m, b_lambda)
            if rng.random() < 0.5:
                second = np.clip(first + 0.01 * b_lambda * rng.normal(size=cmdp.m), 0.0, None)
            p = exact_dual(cmdp, first, tau).policy.probs
            q = exact_dual(cmdp, second, tau).policy.probs
            yield float(np.max(np.sum(np.abs(p - q), axis=1))) - constant * float(np.linalg.norm(first - second))


@suite("dual-range")
def dual_range(rng):
    tau = CHECK_TAU
    for cmdp in _instances(rng, 4):
        b_lambda = _b_lambda(cmdp)
        upper = b_d(cmdp, b_lambda, tau)
        for _ in range(25):
            value = exact_dual(cmdp, _dual_sample(rng, cmdp.m, b_lambda), tau).value
            yield max(-value, value - upper)


@suite("dual-multiplier-bound")
def dual_multiplier_bound(rng):
    tau = CHECK_TAU
    for cmdp in _instances(rng, 3, m=1):
        b_lambda = _b_lambda(cmdp)
        # search twice the radius so the bound is not enforced by the grid
        point, _ = grid_dual_min(cmdp, tau, 2.0 * b_lambda, b_lambda / 200.0, refine=True)
        yield float(np.sum(np.abs(point))) - b_lambda


@suite("danskin-gradient", slack=DANSKIN_SLACK)
def danskin_gradient(rng):
    for m in (1, 2, 1, 2, 1):
        cmdp = next(_instances(rng, 1, m=m))
        cfg = DualConfig(tau=0.05, delta=1e-8).resolve(cmdp)
        lam = 0.05 + rng.random(cmdp.m) * min(cfg.b_lambda, 2.0)
        subgradient = -dual_oracle(cmdp, lam, cfg).vector
        for i in range(cmdp.m):
            step = np.zeros(cmdp.m)
            step[i] = FD_STEP
            difference = (dual_value_estimate(cmdp, lam + step, cfg)
                          - dual_value_estimate(cmdp, lam - step, cfg)) / (2.0 * FD_STEP)
            yield abs(difference - subgradient[i])


@suite("optimality-gap-bound")
def optimality_gap_bound(rng):
    """V_0* - V_0^{pi*} <= <lam, grad d> + tau H(pi*), and the violation equals [-grad d]_+."""
    tau = CHECK_TAU
    for cmdp in _instances(rng, 3):
        reference = lp_solve_cmdp(cmdp)
        b_lambda = _b_lambda(cmdp)
        for _ in range(50):
            lam = _dual_sample(rng, cmdp.m, b_lambda)
            dual = exact_dual(cmdp, lam, tau)
            values = constraint_values(cmdp, dual.policy)
            bound = float(lam @ dual.gradient) + tau * discounted_entropy(cmdp, dual.policy)
            yield reference.optimal_value - values[0] - bound
            violation = np.linalg.norm(np.clip(cmdp.thresholds - values[1:], 0.0, None))
            yield abs(violation - np.linalg.norm(np.clip(-dual.gradient, 0.0, None)))


def _smooth_instances(rng, count):
    """m = 1 instances with i.i.d. kernels, where the mixing constants are known exactly."""
    for cmdp in _instances(rng, count, m=1, iid_kernel=True):
        b_lambda = _b_lambda(cmdp)
        smoothness = l_d(cmdp.big_r_max, l_beta(*IID_MIXING), cmdp.gamma, CHECK_TAU)
        yield cmdp, b_lambda, smoothness


@suite("smoothness-inequalities")
def smoothness_inequalities(rng):
    tau = CHECK_TAU
    for cmdp, b_lambda, smoothness in _smooth_instances(rng, 3):
        _, d_star = grid_dual_min(cmdp, tau, b_lambda, b_lambda / 100.0, refine=True)
        for _ in range(50):
            lam = _dual_sample(rng, cmdp.m, b_lambda)
            dual = exact_dual(cmdp, lam, tau)
            excess = dual.value - d_star
            negative = np.clip(-dual.gradient, 0.0, None)
            yield float(negative @ negative) - 2.0 * smoothness * excess
            rhs = b_lambda * math.sqrt(2.0 * cmdp.m * smoothness * max(excess, 0.0)) + 2.0 * excess
            yield float(lam @ dual.gradient) - rhs


@suite("regularized-dual-inequalities")
def regularized_dual_inequalities(rng):
    tau, mu = CHECK_TAU, REGULARIZATION_MU
    for cmdp, b_lambda, smoothness in _smooth_instances(rng, 3):
        smoothness_mu = smoothness + mu
        _, d_star = grid_dual_min(cmdp, tau, b_lambda, b_lambda / 100.0, refine=True)
        lam_mu, d_star_mu = grid_dual_min(cmdp, tau, b_lambda, b_lambda / 100.0, mu=mu, refine=True)
        at_zero = exact_dual(cmdp, np.zeros(cmdp.m), tau).value
        yield float(lam_mu @ lam_mu) - 2.0 / mu * (at_zero - d_star)
        for _ in range(50):
            lam = _dual_sample(rng, cmdp.m, b_lambda)
            dual = exact_dual(cmdp, lam, tau)
            regularized = dual.value + 0.5 * mu * float(lam @ lam)
            yield float(lam @ dual.gradient) - smoothness_mu / mu * (regularized - d_star_mu)


def run_suite(name, seed=0):
    fn, slack = SUITES[name]
    excesses = [float(excess) for excess in fn(np.random.default_rng(seed))]
    worst = max(excesses) if excesses else -math.inf
    passed = bool(excesses) and worst <= slack
    logger.info(f"check {name}: {len(excesses)} case(s), worst excess {worst:.3g} ({'pass' if passed else 'FAIL'})")
    return CheckResult(name, len(excesses), worst, passed)


def run_checks(names=None, seed=0):
    names = list(SUITES) if not names else names
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise InvalidParameterError(f"unknown check suite(s): {', '.join(unknown)}")
    return [run_suite(name, seed) for name in names]


def format_table(results):
    width = max([len("suite")] + [len(result.name) for result in results])
    lines = [f"{'suite':<{width}}  {'cases':>6}  {'worst excess':>13}  result"]
    for result in results:
        lines.append(f"{result.name:<{width}}  {result.cases:>6d}  {result.worst_excess:>13.4e}  "
                     f"{'pass' if result.passed else 'FAIL'}")
    return "\n".join(lines)
