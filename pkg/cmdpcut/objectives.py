"""Convex test objectives with (sub)gradient oracles for exercising the cutting-plane loop."""

import itertools
import logging
import math

import numpy as np
from scipy.optimize import linprog

from .cutting_plane import SUBGRADIENT_CUT, CutResponse, Polytope
from .errors import InvalidParameterError

logger = logging.getLogger('cmdpcut.objectives')


class Objective:
    """f with a subgradient; oracle() turns it into cut responses (normal = -grad f)."""
    name = "objective"

    def value(self, point):
        raise NotImplementedError

    def gradient(self, point):
        raise NotImplementedError

    def minimum_value(self, polytope):
        raise NotImplementedError

    def oracle(self, point):
        point = np.asarray(point, dtype=float)
        return CutResponse(SUBGRADIENT_CUT, -self.gradient(point), value_estimate=self.value(point))

    __call__ = oracle


class QuadraticObjective(Objective):
    """||x - x0||^2."""
    name = "quadratic"

    def __init__(self, center):
        self.center = np.asarray(center, dtype=float)

    def value(self, point):
        diff = np.asarray(point, dtype=float) - self.center
        return float(diff @ diff)

    def gradient(self, point):
        return 2.0 * (np.asarray(point, dtype=float) - self.center)

    def minimum_value(self, polytope):
        return 0.0 if polytope.contains(self.center, strict=False) else None


class LinearObjective(Objective):
    """<g, x>; its minimum over a polytope sits at a vertex."""
    name = "linear"

    def __init__(self, direction):
        self.direction = np.asarray(direction, dtype=float)
        if not np.any(self.direction):
            raise InvalidParameterError("linear objective needs a nonzero direction")

    def value(self, point):
        return float(self.direction @ np.asarray(point, dtype=float))

    def gradient(self, point):
        return self.direction.copy()

    def minimum_value(self, polytope):
        result = linprog(self.direction, A_ub=-polytope.a_matrix, b_ub=-polytope.b_vector,
                         bounds=[(None, None)] * polytope.m, method="highs")
        return float(result.fun) if result.status == 0 else None


class L1Objective(Objective):
    """||x - x0||_1, nonsmooth."""
    name = "l1"

    def __init__(self, center):
        self.center = np.asarray(center, dtype=float)

    def value(self, point):
        return float(np.sum(np.abs(np.asarray(point, dtype=float) - self.center)))

    def gradient(self, point):
        return np.sign(np.asarray(point, dtype=float) - self.center)

    def minimum_value(self, polytope):
        return 0.0 if polytope.contains(self.center, strict=False) else None


class TiltedOracle:
    """
    Adversarial delta-subgradient for ||x - x0||^2: the true gradient plus a
    tilt of norm 2*sqrt(delta) orthogonal to it (parallel when m = 1).
    Any tilt of that norm keeps f(y) >= f(x) + g~^T(y - x) - delta.
    """

    def __init__(self, objective, delta):
        if not isinstance(objective, QuadraticObjective):
            raise InvalidParameterError("the tilt construction is only valid for the quadratic objective")
        if delta < 0:
            raise InvalidParameterError(f"delta must be nonnegative, got {delta}")
        self.objective = objective
        self.delta = float(delta)

    def tilt(self, grad):
        size = 2.0 * math.sqrt(self.delta)
        m = grad.shape[0]
        norm = float(np.linalg.norm(grad))
        if m == 1:
            return np.array([size if grad[0] >= 0 else -size])
        if norm == 0.0:
            direction = np.zeros(m)
            direction[0] = 1.0
            return size * direction
        unit = grad / norm
        direction = np.zeros(m)
        direction[int(np.argmin(np.abs(unit)))] = 1.0
        direction -= (direction @ unit) * unit
        return size * direction / np.linalg.norm(direction)

    def __call__(self, point):
        point = np.asarray(point, dtype=float)
        grad = self.objective.gradient(point)
        return CutResponse(SUBGRADIENT_CUT, -(grad + self.tilt(grad)),
                           value_estimate=self.objective.value(point))


def box_polytope(lower, upper):
    """[lower, upper] as planes x_j >= l_j and -x_j >= -u_j."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise InvalidParameterError("box needs lower < upper componentwise")
    m = lower.shape[0]
    return Polytope(np.vstack([np.eye(m), -np.eye(m)]), np.concatenate([lower, -upper]))


OBJECTIVES = {
    "quadratic": QuadraticObjective,
    "linear": LinearObjective,
    "l1": L1Objective,
}


def make_objective(name, m, seed=0, radius=1.0):
    """Objective with a seeded anchor drawn inside [-radius/2, radius/2]^m."""
    if name not in OBJECTIVES:
        raise InvalidParameterError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}")
    rng = np.random.default_rng(seed)
    anchor = rng.uniform(-0.5 * radius, 0.5 * radius, size=m)
    if name == "linear":
        anchor = rng.standard_normal(m)
    return OBJECTIVES[name](anchor)


def box_value_range(objective, lower, upper):
    """max f - min f over a box; a convex f peaks at a vertex."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    polytope = box_polytope(lower, upper)
    corners = itertools.product(*zip(lower, upper))
    peak = max(objective.value(np.array(corner)) for corner in corners)
    return peak - objective.minimum_value(polytope)
