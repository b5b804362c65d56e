"""Seeded random CMDP instances with Slater-feasible thresholds."""

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GenerationError, InvalidParameterError
from .mdp_core import TabularCmdp
from .oracles import slater_margin, value_iteration

logger = logging.getLogger('cmdpcut.instances')

SELF_LOOP_MASS = 1e-3
# an i.i.d. kernel mixes in one step, so any C_M >= 1 and beta in (0, 1) are valid
IID_MIXING = (1.0, 0.5)


@dataclass(frozen=True)
class InstanceSpec:
    seed: int
    n_states: int = 10
    n_actions: int = 3
    m: int = 2
    gamma: float = 0.9
    reward_scale: float = 1.0
    constraint_tightness: float = 0.5
    kernel_sparsity: int = 3
    max_retries: int = 20
    slater_fraction: float = 0.01
    iid_kernel: bool = False

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1 or self.m < 0:
            raise InvalidParameterError(
                f"need n_states, n_actions >= 1 and m >= 0, got {self.n_states}, {self.n_actions}, {self.m}")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidParameterError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 <= self.constraint_tightness < 1.0:
            raise InvalidParameterError(f"tightness must lie in [0, 1), got {self.constraint_tightness}")
        if not self.reward_scale > 0 or self.kernel_sparsity < 1 or self.max_retries < 1:
            raise InvalidParameterError("reward_scale, kernel_sparsity and max_retries must be positive")

    @property
    def label(self):
        label = f"seed{self.seed}_s{self.n_states}_a{self.n_actions}_m{self.m}"
        return label + "_iid" if self.iid_kernel else label

    @property
    def slater_threshold(self):
        return self.slater_fraction * self.reward_scale / (1.0 - self.gamma)

    def to_dict(self):
        return asdict(self)


def _random_kernel(rng, spec):
    n_states, n_actions = spec.n_states, spec.n_actions
    if spec.iid_kernel:
        # every (s, a) row is the same draw q, so P_pi = 1 q^T for any policy
        q = 1.0 - rng.random(n_states)
        return np.broadcast_to(q / q.sum(), (n_states, n_actions, n_states)).copy()
    successors = min(spec.kernel_sparsity, n_states)
    kernel = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            support = rng.choice(n_states, size=successors, replace=False)
            weights = 1.0 - rng.random(successors)
            row = np.zeros(n_states)
            row[support] = weights / weights.sum()
            row *= 1.0 - SELF_LOOP_MASS
            row[s] += SELF_LOOP_MASS
            kernel[s, a] = row / row.sum()
    return kernel


def _draw(rng, spec):
    kernel = _random_kernel(rng, spec)
    rewards = spec.reward_scale * (1.0 - rng.random((spec.m + 1, spec.n_states, spec.n_actions)))
    rho = np.full(spec.n_states, 1.0 / spec.n_states)
    draft = TabularCmdp(kernel, rewards, np.zeros(spec.m), spec.gamma, rho)
    best = np.array([float(rho @ value_iteration(draft, rewards[i])[0]) for i in range(1, spec.m + 1)])
    return draft.with_thresholds(spec.constraint_tightness * best)


def generate_instance(spec):
    """
    Draw kernel, rewards and thresholds c_i = tightness * max_pi V_i(rho) from
    default_rng(seed); redraw until the Slater margin clears slater_fraction.
    """
    rng = np.random.default_rng(spec.seed)
    for attempt in range(1, spec.max_retries + 1):
        cmdp = _draw(rng, spec)
        if cmdp.m == 0:
            return cmdp
        xi = slater_margin(cmdp)
        if xi > spec.slater_threshold:
            logger.debug(f"{spec.label}: accepted on attempt {attempt} with xi={xi:.6g}")
            return cmdp
        logger.warning(f"{spec.label}: Slater margin {xi:.4g} below {spec.slater_threshold:.4g}, redrawing")
    raise GenerationError(f"{spec.label}: no instance with a usable Slater margin in {spec.max_retries} draws")
