"""
Vaidya's cutting-plane method with inexact (delta-) subgradient oracles.

The polytope is {x : A x >= b}. At every step the volumetric center
(minimizer of V(x) = 1/2 log det H(x), H = sum_i a_i a_i^T / s_i^2) is
computed; a plane whose leverage score falls below zeta is dropped, otherwise
the oracle is queried and a cut through a shifted offset is added.
Nothing here knows about CMDPs.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linprog

from .errors import (DegenerateCutError, InteriorError, InvalidParameterError,
                     UnboundedPolytopeError, VolumetricCenterError)

logger = logging.getLogger('cmdpcut.cutting_plane')

SUBGRADIENT_CUT = "subgradient-cut"
SEPARATION_CUT = "separation-cut"
DROP = "drop"

THEORY_ETA_MAX = 1e-4
THEORY_ZETA_RATIO = 1e-3
ARMIJO_C = 1e-4
NEWTON_REGION = 1e-4
STALL_WINDOW = 5
MIN_INSCRIBED_RADIUS = 1e-12


@dataclass(frozen=True)
class VaidyaParams:
    """Step parameters. The theoretical regime needs eta <= 1e-4 and zeta <= 1e-3*eta."""
    eta: float = 1e-4
    zeta: float = 1e-7
    t_max: int = 150
    newton_tol: float = 1e-9
    newton_max_iter: int = 200
    unsafe: bool = False

    def __post_init__(self):
        if not (self.eta > 0 and self.zeta > 0):
            raise InvalidParameterError(f"eta and zeta must be positive, got {self.eta}, {self.zeta}")
        if self.zeta > self.eta:
            raise InvalidParameterError(f"zeta={self.zeta} must not exceed eta={self.eta}")
        if not self.unsafe:
            if self.eta > THEORY_ETA_MAX * (1 + 1e-12):
                raise InvalidParameterError(
                    f"eta={self.eta} exceeds {THEORY_ETA_MAX}; pass unsafe=True for practical runs")
            if self.zeta > THEORY_ZETA_RATIO * self.eta * (1 + 1e-12):
                raise InvalidParameterError(
                    f"zeta={self.zeta} exceeds 1e-3*eta; pass unsafe=True for practical runs")
        if int(self.t_max) != self.t_max or self.t_max < 0:
            raise InvalidParameterError(f"t_max must be a nonnegative integer, got {self.t_max}")
        if not self.newton_tol > 0 or self.newton_max_iter < 1:
            raise InvalidParameterError("newton_tol must be positive and newton_max_iter >= 1")

    @classmethod
    def practical(cls, t_max=150):
        """Large-step regime used in experiments (eta=1000, zeta=0.1)."""
        return cls(eta=1000.0, zeta=0.1, t_max=t_max, unsafe=True)


@dataclass(frozen=True, eq=False)
class CutResponse:
    """
    Oracle answer at a query point. `vector` is the cut normal g; the plane
    added is g^T x >= beta. A zero vector certifies optimality.
    """
    kind: str
    vector: np.ndarray
    value_estimate: float = None
    payload: object = None

    def __post_init__(self):
        if self.kind not in (SUBGRADIENT_CUT, SEPARATION_CUT):
            raise InvalidParameterError(f"unknown cut kind {self.kind!r}")
        vector = np.array(self.vector, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vector)):
            raise DegenerateCutError("cut vector has non-finite entries")
        vector.setflags(write=False)
        object.__setattr__(self, 'vector', vector)


class Polytope:
    """Mutable set of planes a_i^T x >= b_i in R^m, at least m+1 of them."""

    def __init__(self, a_matrix, b_vector, check=True):
        a_matrix = np.array(a_matrix, dtype=float, ndmin=2)
        b_vector = np.array(b_vector, dtype=float).reshape(-1)
        if a_matrix.ndim != 2 or a_matrix.shape[0] != b_vector.shape[0]:
            raise InvalidParameterError(
                f"A has shape {a_matrix.shape} but b has {b_vector.shape[0]} entries")
        if not (np.all(np.isfinite(a_matrix)) and np.all(np.isfinite(b_vector))):
            raise InvalidParameterError("planes must be finite")
        if a_matrix.shape[0] < a_matrix.shape[1] + 1:
            raise UnboundedPolytopeError(
                f"{a_matrix.shape[0]} planes cannot bound a region of R^{a_matrix.shape[1]}")
        self.a_matrix = a_matrix
        self.b_vector = b_vector
        if check:
            if not self.is_bounded():
                raise UnboundedPolytopeError("polytope is unbounded")
            chebyshev_center(self)

    @property
    def m(self):
        return self.a_matrix.shape[1]

    @property
    def k(self):
        return self.a_matrix.shape[0]

    def copy(self):
        return Polytope(self.a_matrix.copy(), self.b_vector.copy(), check=False)

    def slacks(self, point):
        return self.a_matrix @ np.asarray(point, dtype=float) - self.b_vector

    def contains(self, point, strict=True):
        slacks = self.slacks(point)
        return bool(np.all(slacks > 0)) if strict else bool(np.all(slacks >= 0))

    def add_plane(self, normal, offset):
        normal = np.asarray(normal, dtype=float).reshape(1, -1)
        if normal.shape[1] != self.m:
            raise InvalidParameterError(f"plane normal must have length {self.m}")
        self.a_matrix = np.vstack([self.a_matrix, normal])
        self.b_vector = np.append(self.b_vector, float(offset))

    def drop_plane(self, index):
        self.a_matrix = np.delete(self.a_matrix, index, axis=0)
        self.b_vector = np.delete(self.b_vector, index)

    def without_plane(self, index):
        candidate = self.copy()
        candidate.drop_plane(index)
        return candidate

    def is_bounded(self):
        """
        {x : Ax >= b} is bounded iff rank A = m and some y > 0 has A^T y = 0.
        The positive y is searched with y >= 1 (scale invariance).
        """
        if self.k < self.m + 1 or np.linalg.matrix_rank(self.a_matrix) < self.m:
            return False
        result = linprog(np.zeros(self.k), A_eq=self.a_matrix.T, b_eq=np.zeros(self.m),
                         bounds=[(1.0, None)] * self.k, method="highs")
        return result.status == 0


def chebyshev_center(polytope):
    """Center and radius of the largest inscribed ball; raises when the interior is empty."""
    norms = np.linalg.norm(polytope.a_matrix, axis=1)
    objective = np.zeros(polytope.m + 1)
    objective[-1] = -1.0
    a_ub = np.hstack([-polytope.a_matrix, norms[:, None]])
    bounds = [(None, None)] * polytope.m + [(0.0, None)]
    result = linprog(objective, A_ub=a_ub, b_ub=-polytope.b_vector, bounds=bounds, method="highs")
    if result.status == 3:
        raise UnboundedPolytopeError("inscribed radius is unbounded")
    if result.status != 0:
        raise UnboundedPolytopeError(f"polytope has no interior ({result.message})")
    center, radius = result.x[:-1], float(result.x[-1])
    scale = max(1.0, float(np.max(np.abs(polytope.b_vector))))
    if radius <= MIN_INSCRIBED_RADIUS * scale or not polytope.contains(center):
        raise UnboundedPolytopeError(f"polytope has empty interior (radius {radius:.3g})")
    return center, radius


def _scaled_rows(point, polytope):
    slacks = polytope.slacks(point)
    if not np.all(slacks > 0):
        worst = int(np.argmin(slacks))
        raise InteriorError(f"point is not strictly interior: slack[{worst}] = {slacks[worst]:.3g}")
    return polytope.a_matrix / slacks[:, None], slacks


def barrier_hessian(point, polytope):
    """H(x) = sum_i a_i a_i^T / (a_i^T x - b_i)^2."""
    scaled, _ = _scaled_rows(point, polytope)
    return scaled.T @ scaled


def _factor(hessian):
    try:
        return cho_factor(hessian, lower=False, check_finite=False)
    except LinAlgError as e:
        raise UnboundedPolytopeError("barrier Hessian is singular") from e


def leverage_scores(point, polytope):
    """sigma_i = a_i^T H^-1 a_i / s_i^2; they sum to m."""
    scaled, _ = _scaled_rows(point, polytope)
    solved = cho_solve(_factor(scaled.T @ scaled), scaled.T, check_finite=False)
    return np.sum(scaled.T * solved, axis=0)


@dataclass(frozen=True, eq=False)
class VolumetricState:
    """Everything the method needs at one interior point."""
    point: np.ndarray
    slacks: np.ndarray
    sigma: np.ndarray
    value: float
    gradient: np.ndarray
    metric: np.ndarray
    hessian: np.ndarray
    h_factor: tuple = field(repr=False)

    @property
    def h_inverse(self):
        return cho_solve(self.h_factor, np.eye(self.point.shape[0]), check_finite=False)


def volumetric_value(point, polytope):
    scaled, _ = _scaled_rows(point, polytope)
    upper, _ = _factor(scaled.T @ scaled)
    return float(np.sum(np.log(np.diag(upper))))


def volumetric_barrier(point, polytope):
    """
    V = 1/2 log det H, grad V = -sum_i sigma_i a_i / s_i, metric Q = sum_i sigma_i a_i a_i^T / s_i^2
    and the exact Hessian 3Q - 2 As^T (P o P) As with P = As H^-1 As^T.
    """
    point = np.asarray(point, dtype=float)
    scaled, slacks = _scaled_rows(point, polytope)
    h_factor = _factor(scaled.T @ scaled)
    solved = cho_solve(h_factor, scaled.T, check_finite=False)
    projection = scaled @ solved
    sigma = np.diag(projection).copy()
    metric = scaled.T @ (sigma[:, None] * scaled)
    hessian = 3.0 * metric - 2.0 * scaled.T @ ((projection * projection) @ scaled)
    return VolumetricState(
        point=point,
        slacks=slacks,
        sigma=sigma,
        value=float(np.sum(np.log(np.diag(h_factor[0])))),
        gradient=-scaled.T @ sigma,
        metric=metric,
        hessian=0.5 * (hessian + hessian.T),
        h_factor=h_factor,
    )


def _newton_direction(state):
    """Newton step on the exact Hessian (Q as fallback) and the decrement ||grad||_{Q^-1}."""
    metric_factor = cho_factor(state.metric, check_finite=False)
    decrement = math.sqrt(max(float(state.gradient @ cho_solve(metric_factor, state.gradient)), 0.0))
    try:
        direction = -cho_solve(cho_factor(state.hessian, check_finite=False), state.gradient)
    except LinAlgError:
        direction = -cho_solve(metric_factor, state.gradient)
    return direction, decrement


def _max_step(polytope, point, direction):
    rates = polytope.a_matrix @ direction
    shrinking = rates < 0
    if not np.any(shrinking):
        return 1.0
    slacks = polytope.slacks(point)
    return min(1.0, 0.99 * float(np.min(slacks[shrinking] / -rates[shrinking])))


def volumetric_center(polytope, warm_start=None, tol=1e-9, max_iter=200):
    """
    Damped Newton on V from warm_start (if strictly interior) or the Chebyshev center.
    Stops when ||grad V||_{Q^-1} <= tol.
    """
    if warm_start is not None and polytope.contains(warm_start):
        point = np.array(warm_start, dtype=float)
    else:
        point, _ = chebyshev_center(polytope)

    best_decrement = math.inf
    stalled = 0
    for iteration in range(max_iter):
        state = volumetric_barrier(point, polytope)
        direction, decrement = _newton_direction(state)
        if decrement <= tol:
            logger.debug(f"volumetric center after {iteration} Newton steps (decrement {decrement:.2e})")
            return point

        if decrement < 0.5 * best_decrement:
            best_decrement = decrement
            stalled = 0
        else:
            stalled += 1
        if stalled >= STALL_WINDOW and decrement < math.sqrt(tol):
            logger.warning(f"Newton stalled at decrement {decrement:.2e}; accepting numerical floor")
            return point

        slope = float(state.gradient @ direction)
        step = _max_step(polytope, point, direction)
        accepted = None
        while step > 1e-14:
            trial = point + step * direction
            if polytope.contains(trial):
                if volumetric_value(trial, polytope) <= state.value + ARMIJO_C * step * slope:
                    accepted = trial
                    break
            step *= 0.5
        if accepted is None:
            full = point + direction
            if decrement < NEWTON_REGION and polytope.contains(full):
                # Armijo cannot resolve value changes this small
                accepted = full
            else:
                raise VolumetricCenterError(
                    f"line search failed at Newton step {iteration} (decrement {decrement:.3g})")
        point = accepted

    raise VolumetricCenterError(f"volumetric center not found in {max_iter} Newton steps")


def cut_offset(grad, point, h_inverse, eta, zeta):
    """
    beta with g^T H^-1 g / (g^T x - beta)^2 = sqrt(eta*zeta)/2 and g^T x >= beta.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.any(grad):
        raise DegenerateCutError("cannot place a cut with a zero normal")
    quad = float(grad @ np.asarray(h_inverse) @ grad)
    return float(grad @ np.asarray(point, dtype=float)) - math.sqrt(2.0 * quad / math.sqrt(eta * zeta))


@dataclass(frozen=True, eq=False)
class VisitedPoint:
    t: int
    point: np.ndarray
    kind: str
    value_estimate: float
    payload: object = None


@dataclass(frozen=True, eq=False)
class VaidyaEvent:
    t: int
    point: np.ndarray
    k: int
    sigma_min: float
    action: str
    value_estimate: float = None
    drop_rejected: bool = False


@dataclass(eq=False)
class VaidyaResult:
    visited: list
    best_point: np.ndarray
    best_value: float
    polytope: Polytope
    events: list
    stop_reason: str = "budget"


def best_visit(visited, kinds=(SUBGRADIENT_CUT,)):
    """First visit with the smallest value estimate among the given kinds."""
    best = None
    for visit in visited:
        if visit.kind not in kinds or visit.value_estimate is None:
            continue
        if best is None or visit.value_estimate < best.value_estimate:
            best = visit
    return best


def vaidya_run(oracle, initial, params, callback=None):
    """
    Run params.t_max iterations of the drop-or-cut loop starting from `initial`
    (left untouched). `oracle(point) -> CutResponse`; `callback(VaidyaEvent)`
    is invoked once per iteration.
    """
    polytope = initial.copy()
    m = polytope.m
    center = volumetric_center(polytope, tol=params.newton_tol, max_iter=params.newton_max_iter)
    visited = []
    events = []
    stop_reason = "budget"
    logger.info(f"Vaidya run: m={m} k0={polytope.k} eta={params.eta:g} zeta={params.zeta:g} T={params.t_max}")

    for t in range(params.t_max):
        # leverage scores at the current volumetric center
        state = volumetric_barrier(center, polytope)
        i_min = int(np.argmin(state.sigma))
        sigma_min = float(state.sigma[i_min])
        query = center.copy()
        action = None
        value_estimate = None
        drop_rejected = False

        # weakest plane below zeta: try dropping it first
        if sigma_min < params.zeta and polytope.k > m + 1:
            candidate = polytope.without_plane(i_min)
            # a drop must keep the polytope bounded
            if candidate.is_bounded():
                try:
                    moved = volumetric_center(candidate, warm_start=center, tol=params.newton_tol,
                                              max_iter=params.newton_max_iter)
                except VolumetricCenterError:
                    moved = None
                if moved is not None:
                    polytope, center, action = candidate, moved, DROP
                    logger.debug(f"t={t}: dropped plane {i_min} (sigma={sigma_min:.3g}), k={polytope.k}")
            if action is None:
                drop_rejected = True
                logger.warning(f"t={t}: drop of plane {i_min} rejected, polytope would lose boundedness; cutting instead")

        # no drop: query the oracle and cut
        if action is None:
            response = oracle(query.copy())
            if response.vector.shape != (m,):
                raise DegenerateCutError(f"oracle returned a vector of length {response.vector.shape[0]}, expected {m}")
            value_estimate = response.value_estimate
            visited.append(VisitedPoint(t, query, response.kind, value_estimate, response.payload))
            action = response.kind
            # zero vector: the query is optimal
            if not np.any(response.vector):
                stop_reason = "zero-subgradient"
                event = VaidyaEvent(t, query, polytope.k, sigma_min, action, value_estimate, drop_rejected)
                events.append(event)
                if callback is not None:
                    callback(event)
                logger.info(f"t={t}: zero subgradient, stopping")
                break
            # shifted plane through the center, then recenter from the old center
            beta = cut_offset(response.vector, center, state.h_inverse, params.eta, params.zeta)
            polytope.add_plane(response.vector, beta)
            center = volumetric_center(polytope, warm_start=center, tol=params.newton_tol,
                                       max_iter=params.newton_max_iter)

        event = VaidyaEvent(t, query, polytope.k, sigma_min, action, value_estimate, drop_rejected)
        events.append(event)
        if callback is not None:
            callback(event)

    best = best_visit(visited)
    logger.info(f"Vaidya run finished ({stop_reason}): {len(visited)} oracle calls, k={polytope.k}")
    return VaidyaResult(
        visited=visited,
        best_point=None if best is None else best.point,
        best_value=None if best is None else best.value_estimate,
        polytope=polytope,
        events=events,
        stop_reason=stop_reason,
    )


def vaidya_bound(b_range, m, radius, inner_radius, zeta, t, delta=0.0):
    """Vaidya accuracy after t steps: B m^1.5 R / (zeta R_in) exp((log pi - zeta t) / (2m)) + delta."""
    coefficient = b_range * m ** 1.5 * radius / (zeta * inner_radius)
    return coefficient * math.exp((math.log(math.pi) - zeta * t) / (2.0 * m)) + delta


def vaidya_iterations(epsilon, delta, b_range, m, radius, inner_radius, zeta):
    """Smallest t with vaidya_bound(...) <= epsilon; needs epsilon > delta."""
    if epsilon <= delta:
        raise InvalidParameterError(f"target accuracy {epsilon} must exceed delta {delta}")
    coefficient = b_range * m ** 1.5 * radius / (zeta * inner_radius)
    t = (math.log(math.pi) - 2.0 * m * math.log((epsilon - delta) / coefficient)) / zeta
    return max(int(math.ceil(t)), 0)
