"""
Cutting-plane solver for entropy-regularized CMDP duals.

The dual d_tau(lam) = max_pi V_0 + <lam, V - c> + tau H(pi) is minimized over
lam >= 0 with Vaidya's method. Each query at lam >= 0 runs exact NPG on the
combined reward r_0 + <lam, r>; its constraint slack gives a delta-subgradient.
Queries outside the nonnegative orthant get a separation cut instead.
The final policy is NPG at the best visited dual point.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cutting_plane import (SEPARATION_CUT, SUBGRADIENT_CUT, CutResponse, Polytope,
                            VaidyaParams, best_visit, vaidya_run)
from .errors import InvalidParameterError, NoDualIterateError, SlaterError
from .mdp_core import Policy, check_dual_vector, constraint_values
from .npg import npg_iteration_bound, c1_upper_bound, run_npg
from .oracles import lp_solve_cmdp, slater_margin
from .simplex import OPTIMAL
from .trace import ConvergenceTrace

logger = logging.getLogger('cmdpcut.cmdp_solver')

UNCONSTRAINED_TAU = 1e-3


@dataclass(frozen=True)
class DualConfig:
    """Solver tunables; None means derive it from the instance."""
    tau: float = None
    delta: float = 1e-6
    mu: float = 0.0
    b_lambda: float = None
    slater_xi: float = None
    vaidya: VaidyaParams = field(default_factory=VaidyaParams)
    t_outer: int = 150
    mixing: tuple = None
    epsilon_target: float = None

    def __post_init__(self):
        if self.tau is not None and not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.mu >= 0:
            raise InvalidParameterError(f"mu must be nonnegative, got {self.mu}")
        if self.b_lambda is not None and not self.b_lambda > 0:
            raise InvalidParameterError(f"b_lambda must be positive, got {self.b_lambda}")
        if int(self.t_outer) != self.t_outer or self.t_outer < 0:
            raise InvalidParameterError(f"t_outer must be a nonnegative integer, got {self.t_outer}")
        if self.mixing is not None:
            c_m, beta = self.mixing
            if not (c_m >= 1.0 and 0.0 < beta < 1.0):
                raise InvalidParameterError(f"mixing needs C_M >= 1 and beta in (0, 1), got {self.mixing}")
        if self.epsilon_target is not None and not self.epsilon_target > 0:
            raise InvalidParameterError(f"epsilon_target must be positive, got {self.epsilon_target}")

    def resolve(self, cmdp, solver=None):
        """Fill every derived quantity; record where each came from."""
        sources = {}
        vaidya = replace(self.vaidya, t_max=int(self.t_outer))

        if cmdp.m == 0:
            tau = self.tau if self.tau is not None else UNCONSTRAINED_TAU
            sources.update(slater_xi="unconstrained", b_lambda="unconstrained",
                           tau="explicit" if self.tau is not None else "unconstrained-default")
            return ResolvedDualConfig(tau, self.delta, self.mu, 0.0, math.inf, vaidya,
                                      int(self.t_outer), self.mixing, sources, self.epsilon_target)

        if self.slater_xi is not None:
            xi, sources["slater_xi"] = float(self.slater_xi), "explicit"
        else:
            xi, sources["slater_xi"] = slater_margin(cmdp, solver), "slater-lp"
        if not xi > 0:
            raise SlaterError(f"no strictly feasible policy: Slater margin {xi:.6g} <= 0")

        if self.b_lambda is not None:
            b_lambda, sources["b_lambda"] = float(self.b_lambda), "explicit"
        else:
            b_lambda, sources["b_lambda"] = compute_b_lambda(cmdp, xi), "slater-bound"

        if self.tau is not None:
            tau, sources["tau"] = float(self.tau), "explicit"
        else:
            epsilon = epsilon_guarantee(cmdp.m, b_lambda, xi, cmdp.big_r_max, cmdp.gamma,
                                       vaidya.zeta, int(self.t_outer))
            tau, sources["tau"] = min(1.0, epsilon ** (1.0 / 3.0)), "accuracy-target"
            if not tau > 0:
                raise InvalidParameterError("derived tau underflowed to 0; pass tau explicitly")

        logger.info(f"resolved config: xi={xi:.6g} ({sources['slater_xi']}), "
                    f"B_lambda={b_lambda:.6g} ({sources['b_lambda']}), tau={tau:.3g} ({sources['tau']})")
        return ResolvedDualConfig(tau, self.delta, self.mu, b_lambda, xi, vaidya,
                                  int(self.t_outer), self.mixing, sources, self.epsilon_target)


@dataclass(frozen=True)
class ResolvedDualConfig:
    tau: float
    delta: float
    mu: float
    b_lambda: float
    slater_xi: float
    vaidya: VaidyaParams
    t_outer: int
    mixing: tuple = None
    sources: dict = field(default_factory=dict, compare=False)
    epsilon_target: float = None

    def to_dict(self):
        document = asdict(self)
        document["slater_xi"] = None if math.isinf(self.slater_xi) else self.slater_xi
        return document


def _resolved(cmdp, cfg):
    return cfg.resolve(cmdp) if isinstance(cfg, DualConfig) else cfg


@dataclass(frozen=True, eq=False)
class OracleVisit:
    """What an NPG-backed query produced; carried as the cut payload."""
    policy: Policy
    values: np.ndarray
    npg_iterations: int


@dataclass(eq=False)
class DiagnosticsReport:
    epsilon_guarantee: float = None
    epsilon_tight: float = None
    tau: float = None
    delta: float = None
    b_lambda: float = None
    slater_xi: float = None
    b_d: float = None
    radius: float = None
    inner_radius: float = None
    l_beta: float = None
    l_d: float = None
    gap_bound: float = None
    violation_bound: float = None
    outer_iterations_target: int = None
    npg_oracle_calls_bound: int = None
    npg_calls: int = 0
    npg_iterations: int = 0
    lp_value: float = None
    measured_gap: float = None
    measured_violation: float = None

    def to_dict(self):
        document = asdict(self)
        for key, value in document.items():
            if isinstance(value, float) and math.isinf(value):
                document[key] = None
        return document


@dataclass(eq=False)
class Solution:
    policy: Policy
    lam: np.ndarray
    trace: ConvergenceTrace
    diagnostics: DiagnosticsReport
    config: ResolvedDualConfig
    run: object = None


def compute_b_lambda(cmdp, xi):
    """B_lambda = (r_0,max + log|A|) / ((1 - gamma) xi)."""
    if not xi > 0:
        raise SlaterError(f"Slater margin must be positive, got {xi}")
    return (float(cmdp.r_max[0]) + math.log(cmdp.n_actions)) / ((1.0 - cmdp.gamma) * xi)


def initial_simplex(b_lambda, m):
    """{lam : lam_j >= -B, sum_j lam_j <= m B} as A = [I; -1^T], b = [-B 1; -m B]."""
    if m < 1 or not b_lambda > 0:
        raise InvalidParameterError(f"need m >= 1 and b_lambda > 0, got m={m}, b_lambda={b_lambda}")
    a_matrix = np.vstack([np.eye(m), -np.ones((1, m))])
    b_vector = np.concatenate([-b_lambda * np.ones(m), [-m * b_lambda]])
    return Polytope(a_matrix, b_vector)


def dual_oracle(cmdp, lam, cfg):
    """
    Separation cut e_i (lam_i < 0) outside the orthant; otherwise the NPG cut
    c - V^{pi~}(rho) - mu lam with value estimate L_tau(pi~, lam) + mu/2 ||lam||^2.
    """
    cfg = _resolved(cmdp, cfg)
    lam = check_dual_vector(cmdp, lam)
    if np.any(lam < 0):
        return CutResponse(SEPARATION_CUT, (lam < 0).astype(float))

    result = run_npg(cmdp, cmdp.combined_reward(lam), cfg.tau, cfg.delta)
    values = constraint_values(cmdp, result.policy)
    lagrangian = result.report.scalar_value - float(lam @ cmdp.thresholds)
    vector = cmdp.thresholds - values[1:] - cfg.mu * lam
    return CutResponse(
        SUBGRADIENT_CUT,
        vector,
        value_estimate=lagrangian + 0.5 * cfg.mu * float(lam @ lam),
        payload=OracleVisit(result.policy, values, result.iterations_used),
    )


def dual_value_estimate(cmdp, lam, cfg):
    """L_tau(pi~, lam) with pi~ from a fresh NPG call; within 6 tau gamma delta below d_tau(lam)."""
    cfg = _resolved(cmdp, cfg)
    lam = check_dual_vector(cmdp, lam)
    if np.any(lam < 0):
        raise InvalidParameterError("dual value estimates need lam >= 0")
    result = run_npg(cmdp, cmdp.combined_reward(lam), cfg.tau, cfg.delta)
    return result.report.scalar_value - float(lam @ cmdp.thresholds)


def _violation(cmdp, values):
    return float(np.linalg.norm(np.clip(cmdp.thresholds - values[1:], 0.0, None)))


def solve(cmdp, cfg=None, oracle_check=False, callback=None, label=None):
    """
    Run the cutting-plane loop and extract pi_T = NPG(r_0 + <lam_T, r>).
    lam_T is the value-estimate argmin over the NPG-queried (nonnegative) iterates.
    """
    cfg = _resolved(cmdp, cfg or DualConfig())
    trace = ConvergenceTrace(cmdp.m, label=label)
    reference = lp_solve_cmdp(cmdp) if oracle_check else None
    lp_value = reference.optimal_value if reference is not None and reference.status == OPTIMAL else None
    logger.info(f"solve: |S|={cmdp.n_states} |A|={cmdp.n_actions} m={cmdp.m} T={cfg.t_outer} "
                f"tau={cfg.tau:.3g} delta={cfg.delta:.3g} mu={cfg.mu:g}")

    if cmdp.m == 0:
        result = run_npg(cmdp, cmdp.rewards[0], cfg.tau, cfg.delta)
        diagnostics = DiagnosticsReport(tau=cfg.tau, delta=cfg.delta, npg_calls=1,
                                        npg_iterations=result.iterations_used)
        _measure(cmdp, result.policy, lp_value, diagnostics)
        return Solution(result.policy, np.zeros(0), trace, diagnostics, cfg)

    counters = {"calls": 0, "iterations": 0}
    latest = {}

    def oracle(point):
        response = dual_oracle(cmdp, point, cfg)
        latest["response"] = response
        if response.payload is not None:
            counters["calls"] += 1
            counters["iterations"] += response.payload.npg_iterations
        return response

    def record(event):
        gap = violation = None
        response = latest.pop("response", None)
        if event.action == SUBGRADIENT_CUT and response is not None and lp_value is not None:
            gap = lp_value - float(response.payload.values[0])
            violation = _violation(cmdp, response.payload.values)
        trace.record(event.t, event.action, event.k, event.sigma_min, event.point,
                     event.value_estimate, gap, violation)
        if callback is not None:
            callback(event)

    run = vaidya_run(oracle, initial_simplex(cfg.b_lambda, cmdp.m), cfg.vaidya, callback=record)
    best = best_visit(run.visited)
    if best is None:
        raise NoDualIterateError("no nonnegative dual iterate was visited", trace=trace)

    lam_t = np.array(best.point)
    final = run_npg(cmdp, cmdp.combined_reward(lam_t), cfg.tau, cfg.delta)
    counters["calls"] += 1
    counters["iterations"] += final.iterations_used

    diagnostics = guarantee_bounds(cmdp, cfg, cfg.mixing)
    diagnostics.npg_calls = counters["calls"]
    diagnostics.npg_iterations = counters["iterations"]
    _measure(cmdp, final.policy, lp_value, diagnostics)
    logger.info(f"solve finished: lam_T={np.array2string(lam_t, precision=6)} "
                f"estimate={best.value_estimate:.10g} stop={run.stop_reason}")
    return Solution(final.policy, lam_t, trace, diagnostics, cfg, run)


def _measure(cmdp, policy, lp_value, diagnostics):
    if lp_value is None:
        return
    values = constraint_values(cmdp, policy)
    diagnostics.lp_value = lp_value
    diagnostics.measured_gap = lp_value - float(values[0])
    diagnostics.measured_violation = _violation(cmdp, values)


def _range_term(m, xi, big_r_max, gamma):
    return xi + math.sqrt(m) * big_r_max / (1.0 - gamma)


def epsilon_guarantee(m, b_lambda, xi, big_r_max, gamma, zeta, t):
    """2 m^2 B / zeta (xi + sqrt(m) R / (1-gamma)) exp((log pi - zeta T) / (2m))."""
    coefficient = 2.0 * m * m * b_lambda / zeta * _range_term(m, xi, big_r_max, gamma)
    return coefficient * math.exp((math.log(math.pi) - zeta * t) / (2.0 * m))


def epsilon_tight(m, b_lambda, xi, big_r_max, gamma, zeta, t):
    """Same envelope with the coefficient m^2 (1 + sqrt(m)) B / zeta."""
    coefficient = m * m * (1.0 + math.sqrt(m)) * b_lambda / zeta * _range_term(m, xi, big_r_max, gamma)
    return coefficient * math.exp((math.log(math.pi) - zeta * t) / (2.0 * m))


def outer_iterations_for(epsilon_target, m, b_lambda, xi, big_r_max, gamma, zeta):
    """Smallest T with epsilon_guarantee(..., T) <= epsilon_target."""
    if not epsilon_target > 0:
        raise InvalidParameterError(f"target accuracy must be positive, got {epsilon_target}")
    coefficient = 2.0 * m * m * b_lambda / zeta * _range_term(m, xi, big_r_max, gamma)
    t = math.log(math.pi) / zeta + (2.0 * m / zeta) * math.log(coefficient / epsilon_target)
    return max(int(math.ceil(t)), 0)


def l_beta(c_m, beta):
    """ceil(log_beta(1/C_M)) + 1/(1-beta) + 1."""
    return math.ceil(math.log(1.0 / c_m) / math.log(beta)) + 1.0 / (1.0 - beta) + 1.0


def l_d(big_r_max, l_beta_value, gamma, tau):
    """Smoothness constant of d_tau."""
    return big_r_max ** 2 * l_beta_value / ((1.0 - gamma) ** 2 * tau)


def b_d(cmdp, b_lambda, tau):
    """Upper bound on d_tau over the dual search set."""
    return (float(cmdp.r_max[0]) + math.sqrt(cmdp.m) * b_lambda * cmdp.big_r_max
            + tau * math.log(cmdp.n_actions)) / (1.0 - cmdp.gamma)


def gap_bound(epsilon, delta, gamma, b_lambda, big_r_max, m, l_beta_value, n_actions):
    cube = epsilon ** (1.0 / 3.0)
    inner = epsilon ** (2.0 / 3.0) + 6.0 * gamma * delta
    return (b_lambda * big_r_max * math.sqrt(2.0 * m * l_beta_value) / (1.0 - gamma) * math.sqrt(inner)
            + 2.0 * epsilon
            + 18.0 * gamma * delta * cube
            + math.log(n_actions) / (1.0 - gamma) * cube
            + math.sqrt(m) * b_lambda * l_beta_value * n_actions * big_r_max * delta / (1.0 - gamma))


def violation_bound(epsilon, delta, gamma, big_r_max, l_beta_value, n_actions):
    inner = epsilon ** (2.0 / 3.0) + 6.0 * gamma * delta
    return (2.0 * big_r_max ** 2 * l_beta_value / (1.0 - gamma) * inner
            + l_beta_value * n_actions * big_r_max * delta / (1.0 - gamma))


def guarantee_bounds(cmdp, cfg, mixing=None):
    """Every closed-form quantity of the convergence guarantee for this instance and config."""
    cfg = _resolved(cmdp, cfg)
    m = cmdp.m
    report = DiagnosticsReport(tau=cfg.tau, delta=cfg.delta, b_lambda=cfg.b_lambda, slater_xi=cfg.slater_xi)
    if m == 0:
        return report
    args = (m, cfg.b_lambda, cfg.slater_xi, cmdp.big_r_max, cmdp.gamma, cfg.vaidya.zeta, cfg.t_outer)
    report.epsilon_guarantee = epsilon_guarantee(*args)
    report.epsilon_tight = epsilon_tight(*args)
    report.b_d = b_d(cmdp, cfg.b_lambda, cfg.tau)
    report.radius = cfg.b_lambda
    report.inner_radius = cfg.b_lambda / (m + math.sqrt(m))
    # T for the requested accuracy, else for the accuracy this T guarantees
    target = cfg.epsilon_target if cfg.epsilon_target is not None else report.epsilon_guarantee
    if target > 0:
        report.outer_iterations_target = outer_iterations_for(target, *args[:-1])
        report.npg_oracle_calls_bound = report.outer_iterations_target * npg_iterations_per_call(cmdp, cfg)
    if mixing is not None:
        report.l_beta = l_beta(*mixing)
        report.l_d = l_d(cmdp.big_r_max, report.l_beta, cmdp.gamma, cfg.tau)
        report.gap_bound = gap_bound(report.epsilon_guarantee, cfg.delta, cmdp.gamma, cfg.b_lambda,
                                     cmdp.big_r_max, m, report.l_beta, cmdp.n_actions)
        report.violation_bound = violation_bound(report.epsilon_guarantee, cfg.delta, cmdp.gamma,
                                                 cmdp.big_r_max, report.l_beta, cmdp.n_actions)
    return report


def npg_iterations_per_call(cmdp, cfg):
    """Worst-case NPG iterations per oracle call for the largest combined reward on the search set."""
    cfg = _resolved(cmdp, cfg)
    r_scale = max(float(cmdp.r_max[0]) + cfg.b_lambda * float(np.max(cmdp.r_max[1:], initial=0.0)), 1.0)
    c1 = c1_upper_bound(cfg.tau / r_scale, cmdp.n_actions, cmdp.gamma)
    return npg_iteration_bound(c1, r_scale, cfg.delta, cfg.tau, cmdp.gamma)
