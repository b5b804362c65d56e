"""
Ground-truth machinery independent of the cutting-plane solver.

The exact CMDP optimum comes from the occupancy-measure LP solved by the
in-house dense simplex; the Slater margin from the same LP with a uniform
slack variable. Exact regularized optima come from soft value iteration.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import logsumexp, softmax

from .errors import InvalidParameterError, IterationLimitError
from .mdp_core import Policy, check_dual_vector, constraint_values
from .simplex import INFEASIBLE, OPTIMAL, DenseSimplex

logger = logging.getLogger('cmdpcut.oracles')

MASS_FLOOR = 1e-12
SOFT_VI_MAX_ITER = 1_000_000


@dataclass(frozen=True, eq=False)
class LpSolution:
    status: str
    optimal_value: float = None
    occupancy: np.ndarray = None
    policy: Policy = None


@dataclass(frozen=True, eq=False)
class SoftOptimum:
    values: np.ndarray
    policy: Policy
    soft_q: np.ndarray
    iterations: int
    residuals: tuple = ()


@dataclass(frozen=True, eq=False)
class DualPoint:
    """d_tau(lam), its gradient V^{pi*} - c and the maximizing policy, all exact."""
    value: float
    gradient: np.ndarray
    policy: Policy
    values: np.ndarray


def occupancy_to_policy(occupancy, mass_floor=MASS_FLOOR):
    """pi(a|s) = nu(s,a) / sum_b nu(s,b); uniform where a state carries no mass."""
    return Policy.from_weights(occupancy, mass_floor=mass_floor)


def _flow_system(cmdp):
    """Rows sum_a nu(s,a) - gamma sum P(s|s',a') nu(s',a') = (1 - gamma) rho(s)."""
    n_states, n_actions = cmdp.n_states, cmdp.n_actions
    outflow = np.kron(np.eye(n_states), np.ones((1, n_actions)))
    return outflow - cmdp.gamma * cmdp.kernel_matrix.T, (1.0 - cmdp.gamma) * cmdp.rho


def _constraint_rows(cmdp):
    return cmdp.rewards[1:].reshape(cmdp.m, -1) / (1.0 - cmdp.gamma)


def lp_solve_cmdp(cmdp, solver=None):
    """max <nu, r_0>/(1-gamma) over occupancy measures meeting every constraint."""
    solver = solver or DenseSimplex()
    a_eq, b_eq = _flow_system(cmdp)
    result = solver.solve(cmdp.rewards[0].reshape(-1) / (1.0 - cmdp.gamma),
                          a_eq=a_eq, b_eq=b_eq,
                          a_ge=_constraint_rows(cmdp) if cmdp.m else None,
                          b_ge=cmdp.thresholds if cmdp.m else None)
    if result.status != OPTIMAL:
        logger.info(f"occupancy LP status: {result.status}")
        return LpSolution(result.status)
    occupancy = result.x.reshape(cmdp.n_states, cmdp.n_actions)
    logger.debug(f"occupancy LP optimal value {result.objective:.10g} after {result.pivots} pivots")
    return LpSolution(OPTIMAL, result.objective, occupancy, occupancy_to_policy(occupancy))


def slater_point(cmdp, solver=None):
    """
    max t subject to the flow rows and <nu, r_i>/(1-gamma) >= c_i + t.
    t is free, split as t+ - t-. optimal_value is the Slater margin xi.
    """
    if cmdp.m == 0:
        raise InvalidParameterError("the Slater LP needs at least one constraint")
    solver = solver or DenseSimplex()
    n = cmdp.n_states * cmdp.n_actions
    a_eq, b_eq = _flow_system(cmdp)
    a_eq = np.hstack([a_eq, np.zeros((a_eq.shape[0], 2))])
    ones = np.ones((cmdp.m, 1))
    a_ge = np.hstack([_constraint_rows(cmdp), -ones, ones])
    objective = np.zeros(n + 2)
    objective[n], objective[n + 1] = 1.0, -1.0
    result = solver.solve(objective, a_eq=a_eq, b_eq=b_eq, a_ge=a_ge, b_ge=cmdp.thresholds)
    if result.status != OPTIMAL:
        # flow rows are always feasible and t is bounded by the reward range
        logger.error(f"Slater LP returned status {result.status}")
        return LpSolution(result.status)
    occupancy = result.x[:n].reshape(cmdp.n_states, cmdp.n_actions)
    return LpSolution(OPTIMAL, result.objective, occupancy, occupancy_to_policy(occupancy))


def slater_margin(cmdp, solver=None):
    """xi = max_pi min_i (V_i(rho) - c_i); +inf without constraints."""
    if cmdp.m == 0:
        return math.inf
    solution = slater_point(cmdp, solver)
    if solution.status == INFEASIBLE:
        return -math.inf
    return solution.optimal_value


def soft_bellman(cmdp, reward, tau, values):
    """(T V)(s) = tau log sum_a exp(Q(s,a)/tau), with Q = r + gamma P V."""
    q = reward + cmdp.gamma * (cmdp.kernel @ values)
    return tau * logsumexp(q / tau, axis=1), q


def _stop_threshold(cmdp, tol, values):
    floor = 16.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(values))))
    if cmdp.gamma == 0.0:
        return math.inf
    return max(tol * (1.0 - cmdp.gamma) / cmdp.gamma, floor)


def soft_value_iteration(cmdp, reward, tau, tol=1e-10, initial=None, max_iter=SOFT_VI_MAX_ITER):
    """
    Iterate the soft Bellman operator until ||V - V'||_inf <= tol (1-gamma)/gamma,
    so the returned V is within tol of V*_tau. pi* is softmax(Q*/tau).
    """
    if not tau > 0 or not tol > 0:
        raise InvalidParameterError(f"tau and tol must be positive, got {tau}, {tol}")
    reward = np.asarray(reward, dtype=float)
    values = np.zeros(cmdp.n_states) if initial is None else np.array(initial, dtype=float)
    residuals = []
    for iteration in range(1, max_iter + 1):
        updated, _ = soft_bellman(cmdp, reward, tau, values)
        residual = float(np.max(np.abs(updated - values)))
        residuals.append(residual)
        values = updated
        if residual <= _stop_threshold(cmdp, tol, values):
            break
    else:
        raise IterationLimitError(f"soft value iteration did not converge in {max_iter} sweeps")
    _, q = soft_bellman(cmdp, reward, tau, values)
    return SoftOptimum(values, Policy(softmax(q / tau, axis=1)), q, iteration, tuple(residuals))


def value_iteration(cmdp, reward, tol=1e-10, max_iter=SOFT_VI_MAX_ITER):
    """Unregularized optimum: values, a greedy deterministic policy and Q*."""
    reward = np.asarray(reward, dtype=float)
    values = np.zeros(cmdp.n_states)
    for iteration in range(1, max_iter + 1):
        q = reward + cmdp.gamma * (cmdp.kernel @ values)
        updated = q.max(axis=1)
        residual = float(np.max(np.abs(updated - values)))
        values = updated
        if residual <= _stop_threshold(cmdp, tol, values):
            break
    else:
        raise IterationLimitError(f"value iteration did not converge in {max_iter} sweeps")
    q = reward + cmdp.gamma * (cmdp.kernel @ values)
    return values, Policy.deterministic(np.argmax(q, axis=1), cmdp.n_actions), q


def exact_dual(cmdp, lam, tau, tol=1e-12, initial=None):
    lam = check_dual_vector(cmdp, lam)
    optimum = soft_value_iteration(cmdp, cmdp.combined_reward(lam), tau, tol=tol, initial=initial)
    value = float(cmdp.rho @ optimum.values) - float(lam @ cmdp.thresholds)
    gradient = constraint_values(cmdp, optimum.policy)[1:] - cmdp.thresholds
    return DualPoint(value, gradient, optimum.policy, optimum.values)


def exact_dual_value(cmdp, lam, tau, tol=1e-12):
    """d_tau(lam) = max_pi L_tau(pi, lam)."""
    return exact_dual(cmdp, lam, tau, tol).value


def exact_dual_gradient(cmdp, lam, tau, tol=1e-12):
    """grad d_tau(lam) = V^{pi*_{tau,lam}}(rho) - c."""
    return exact_dual(cmdp, lam, tau, tol).gradient


def grid_dual_min(cmdp, tau, b_lambda, resolution, mu=0.0, refine=False, tol=1e-12):
    """
    Minimize d_tau(lam) + mu/2 ||lam||^2 over the grid [0, b_lambda]^m (m <= 2).
    With refine=True the grid argmin is polished inside its neighbouring cell.
    """
    if cmdp.m not in (1, 2):
        raise InvalidParameterError(f"grid dual minimization supports m in {{1, 2}}, got m={cmdp.m}")
    if not resolution > 0 or not b_lambda > 0:
        raise InvalidParameterError("resolution and b_lambda must be positive")
    axis = np.arange(0.0, b_lambda + 0.5 * resolution, resolution)
    points = axis[:, None] if cmdp.m == 1 else np.array(np.meshgrid(axis, axis, indexing="ij")).reshape(2, -1).T

    best_point, best_value = None, math.inf
    warm = None
    for point in points:
        dual = exact_dual(cmdp, point, tau, tol, initial=warm)
        warm = dual.values
        value = dual.value + 0.5 * mu * float(point @ point)
        if value < best_value:
            best_point, best_value = point.copy(), value
    logger.debug(f"grid dual min over {len(points)} points: {best_value:.10g} at {best_point}")
    if not refine:
        return best_point, best_value

    lower = np.clip(best_point - resolution, 0.0, b_lambda)
    upper = np.clip(best_point + resolution, 0.0, b_lambda)
    if cmdp.m == 1:
        def scalar(x):
            return exact_dual_value(cmdp, [x], tau, tol) + 0.5 * mu * x * x
        result = minimize_scalar(scalar, bounds=(lower[0], upper[0]), method="bounded",
                                 options={"xatol": 1e-10})
        refined, refined_value = np.array([result.x]), float(result.fun)
    else:
        def with_gradient(x):
            dual = exact_dual(cmdp, x, tau, tol)
            return dual.value + 0.5 * mu * float(x @ x), dual.gradient + mu * x
        result = minimize(with_gradient, best_point, jac=True, method="L-BFGS-B",
                          bounds=list(zip(lower, upper)), options={"ftol": 1e-15, "gtol": 1e-10})
        refined, refined_value = np.asarray(result.x), float(result.fun)
    if refined_value <= best_value:
        return refined, refined_value
    return best_point, best_value


def _horizon(gamma, accuracy=1e-10):
    if gamma == 0.0:
        return 1
    return int(math.ceil(math.log(accuracy) / math.log(gamma))) + 1


def _propagate(cmdp, policy, horizon):
    p_pi = np.einsum('sa,sat->st', policy.probs, cmdp.kernel)
    state = cmdp.rho.copy()
    for t in range(horizon):
        yield t, state
        state = state @ p_pi


def rollout_value(cmdp, policy, reward, horizon=None):
    """Truncated sum_{t<=T} gamma^t E[r(s_t, a_t)] by exact distribution propagation."""
    horizon = horizon or _horizon(cmdp.gamma)
    r_pi = np.sum(policy.probs * np.asarray(reward, dtype=float), axis=1)
    return float(sum(cmdp.gamma ** t * (state @ r_pi) for t, state in _propagate(cmdp, policy, horizon)))


def rollout_visitation(cmdp, policy, horizon=None):
    """(1 - gamma) sum_{t<=T} gamma^t Pr(s_t = s, a_t = a)."""
    horizon = horizon or _horizon(cmdp.gamma)
    total = np.zeros(cmdp.n_states)
    for t, state in _propagate(cmdp, policy, horizon):
        total += cmdp.gamma ** t * state
    return (1.0 - cmdp.gamma) * total[:, None] * policy.probs
