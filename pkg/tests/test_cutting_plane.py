import math

import numpy as np
import pytest

from cmdpcut.cmdp_solver import initial_simplex
from cmdpcut.cutting_plane import (SEPARATION_CUT, SUBGRADIENT_CUT, CutResponse, Polytope, VaidyaParams,
                                   VisitedPoint, barrier_hessian, best_visit, chebyshev_center, cut_offset,
                                   leverage_scores, vaidya_bound, vaidya_iterations, vaidya_run,
                                   volumetric_barrier, volumetric_center, volumetric_value)
from cmdpcut.errors import DegenerateCutError, InteriorError, InvalidParameterError, UnboundedPolytopeError
from cmdpcut.objectives import (LinearObjective, QuadraticObjective, TiltedOracle, box_polytope, box_value_range,
                                make_objective)


def _random_polytope(seed, m=2, extra=6):
    """Unit box plus random planes that keep the origin at slack 1."""
    rng = np.random.default_rng(seed)
    normals = rng.normal(size=(extra, m))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    box = box_polytope(-np.ones(m), np.ones(m))
    return Polytope(np.vstack([box.a_matrix, normals]), np.concatenate([box.b_vector, -np.ones(extra)]))


def _barrier_gradient(point, polytope):
    return -(polytope.a_matrix / polytope.slacks(point)[:, None]).sum(axis=0)


def test_box_hessian_at_center():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    np.testing.assert_allclose(barrier_hessian(np.zeros(2), box), 2.0 * np.eye(2))
    np.testing.assert_allclose(leverage_scores(np.zeros(2), box), 0.5)


def test_parallel_planes_hessian():
    strip = box_polytope([0.0], [3.0])
    assert barrier_hessian([1.0], strip)[0, 0] == pytest.approx(1.0 + 0.25)


@pytest.mark.parametrize("seed", range(3))
def test_hessian_matches_barrier_curvature(seed):
    polytope = _random_polytope(seed)
    point = np.random.default_rng(seed).uniform(-0.3, 0.3, size=2)
    step = 1e-6
    numeric = np.column_stack([
        (_barrier_gradient(point + step * e, polytope) - _barrier_gradient(point - step * e, polytope)) / (2 * step)
        for e in np.eye(2)])
    np.testing.assert_allclose(barrier_hessian(point, polytope), numeric, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_leverage_scores_are_log_det_derivatives(seed):
    polytope = _random_polytope(seed, m=3, extra=5)
    point = np.random.default_rng(seed).uniform(-0.2, 0.2, size=3)
    hessian = barrier_hessian(point, polytope)
    base = np.linalg.slogdet(hessian)[1]
    slacks = polytope.slacks(point)
    t = 1e-7
    numeric = []
    for a_i, s_i in zip(polytope.a_matrix, slacks):
        row = a_i / s_i
        numeric.append((np.linalg.slogdet(hessian + t * np.outer(row, row))[1] - base) / t)
    sigma = leverage_scores(point, polytope)
    np.testing.assert_allclose(sigma, numeric, atol=1e-5)
    assert sigma.sum() == pytest.approx(3.0, abs=1e-10)
    assert np.all((sigma > 0) & (sigma <= 1.0 + 1e-12))


@pytest.mark.parametrize("seed", range(3))
def test_volumetric_gradient_and_hessian(seed):
    polytope = _random_polytope(seed)
    point = np.random.default_rng(seed).uniform(-0.3, 0.3, size=2)
    state = volumetric_barrier(point, polytope)
    assert state.value == pytest.approx(0.5 * np.linalg.slogdet(barrier_hessian(point, polytope))[1], abs=1e-12)
    step = 1e-6
    gradient = [(volumetric_value(point + step * e, polytope) - volumetric_value(point - step * e, polytope))
                / (2 * step) for e in np.eye(2)]
    np.testing.assert_allclose(state.gradient, gradient, atol=1e-6)
    hessian = np.column_stack([
        (volumetric_barrier(point + step * e, polytope).gradient
         - volumetric_barrier(point - step * e, polytope).gradient) / (2 * step) for e in np.eye(2)])
    np.testing.assert_allclose(state.hessian, hessian, rtol=1e-4, atol=1e-5)


def test_volumetric_center_of_boxes():
    np.testing.assert_allclose(volumetric_center(box_polytope([-1.0, -1.0], [1.0, 1.0])), 0.0, atol=1e-8)
    np.testing.assert_allclose(volumetric_center(box_polytope([0.0, -3.0], [2.0, 1.0])), [1.0, -1.0], atol=1e-8)


def test_volumetric_center_of_initial_simplex():
    simplex = initial_simplex(1.0, 2)
    center = volumetric_center(simplex)
    np.testing.assert_allclose(center, [1.0 / 3.0, 1.0 / 3.0], atol=1e-7)
    best = volumetric_value(center, simplex)
    grid = np.linspace(-0.95, 2.95, 40)
    for x in grid:
        for y in grid:
            if simplex.contains([x, y]):
                assert volumetric_value([x, y], simplex) >= best - 1e-12


def test_warm_start_outside_falls_back_to_chebyshev():
    box = box_polytope([0.0, 0.0], [1.0, 1.0])
    np.testing.assert_allclose(volumetric_center(box, warm_start=[5.0, 5.0]), [0.5, 0.5], atol=1e-8)


def test_cut_offset_example():
    assert cut_offset([1.0, 0.0], [0.0, 0.0], np.eye(2), eta=4.0, zeta=1.0) == pytest.approx(-1.0)


@pytest.mark.parametrize("seed", range(3))
def test_cut_offset_places_plane_at_prescribed_distance(seed):
    rng = np.random.default_rng(seed)
    polytope = _random_polytope(seed)
    point = rng.uniform(-0.3, 0.3, size=2)
    h_inverse = volumetric_barrier(point, polytope).h_inverse
    grad = rng.normal(size=2)
    eta, zeta = 1e-4, 1e-7
    beta = cut_offset(grad, point, h_inverse, eta, zeta)
    gap = grad @ point - beta
    assert gap > 0
    assert grad @ h_inverse @ grad / gap ** 2 == pytest.approx(math.sqrt(eta * zeta) / 2.0, rel=1e-10)


def test_zero_cut_normal_is_degenerate():
    with pytest.raises(DegenerateCutError):
        cut_offset([0.0, 0.0], [0.0, 0.0], np.eye(2), 1e-4, 1e-7)
    with pytest.raises(DegenerateCutError):
        CutResponse(SUBGRADIENT_CUT, [np.nan, 1.0])


def test_exterior_point_is_rejected():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(InteriorError):
        barrier_hessian([1.0, 0.0], box)
    with pytest.raises(InteriorError):
        volumetric_barrier([2.0, 0.0], box)


def test_unbounded_and_flat_polytopes():
    with pytest.raises(UnboundedPolytopeError):
        Polytope([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.0, 0.0, 0.0])
    with pytest.raises(UnboundedPolytopeError):
        Polytope([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(UnboundedPolytopeError):
        Polytope([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], [0.0, 0.0, -1.0, -1.0])


def test_plane_bookkeeping():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    assert box.is_bounded()
    assert not box.without_plane(0).is_bounded()
    box.add_plane([1.0, 1.0], -0.5)
    assert box.k == 5
    assert not box.contains([-0.5, -0.5])
    with pytest.raises(InvalidParameterError):
        box.add_plane([1.0], 0.0)
    center, radius = chebyshev_center(box_polytope([0.0, 0.0], [2.0, 4.0]))
    assert radius == pytest.approx(1.0)
    assert center[0] == pytest.approx(1.0)


def test_params_guard_the_theoretical_regime():
    VaidyaParams()
    with pytest.raises(InvalidParameterError):
        VaidyaParams(eta=1.0, zeta=1e-4)
    with pytest.raises(InvalidParameterError):
        VaidyaParams(eta=1e-4, zeta=1e-6)
    with pytest.raises(InvalidParameterError):
        VaidyaParams(eta=1.0, zeta=2.0, unsafe=True)
    practical = VaidyaParams.practical(t_max=10)
    assert (practical.eta, practical.zeta, practical.t_max, practical.unsafe) == (1000.0, 0.1, 10, True)


def test_best_visit_ignores_separation_cuts():
    visits = [VisitedPoint(0, np.zeros(1), SEPARATION_CUT, None),
              VisitedPoint(1, np.ones(1), SUBGRADIENT_CUT, 2.0),
              VisitedPoint(2, np.ones(1), SUBGRADIENT_CUT, 1.5),
              VisitedPoint(3, np.ones(1), SUBGRADIENT_CUT, 1.5)]
    assert best_visit(visits).t == 2
    assert best_visit(visits[:1]) is None


def test_quadratic_converges_with_practical_steps():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    objective = QuadraticObjective([0.3, -0.2])
    events = []
    result = vaidya_run(objective, box, VaidyaParams.practical(t_max=150), callback=events.append)
    assert result.best_value <= 1e-3
    assert result.best_value == min(v.value_estimate for v in result.visited)
    assert len(events) == len(result.events) == 150
    assert all(event.k >= 3 for event in events)
    assert box.k == 4


@pytest.mark.parametrize("m", [2, 3, 5])
def test_best_value_stays_inside_accuracy_envelope(m):
    lower, upper = -np.ones(m), np.ones(m)
    objective = make_objective("quadratic", m, seed=m)
    params = VaidyaParams.practical(t_max=150)
    b_range = box_value_range(objective, lower, upper)
    result = vaidya_run(objective, box_polytope(lower, upper), params)
    best = math.inf
    for event in result.events:
        if event.value_estimate is not None:
            best = min(best, event.value_estimate)
        assert best <= vaidya_bound(b_range, m, math.sqrt(m), 1.0, params.zeta, event.t + 1)
    assert best == result.best_value


@pytest.mark.parametrize("m", [2, 3, 5])
def test_tilted_oracle_costs_at_most_delta(m):
    lower, upper = -np.ones(m), np.ones(m)
    objective = make_objective("quadratic", m, seed=m)
    params = VaidyaParams.practical(t_max=150)
    delta = 1e-3
    exact = vaidya_run(objective, box_polytope(lower, upper), params)
    tilted = vaidya_run(TiltedOracle(objective, delta), box_polytope(lower, upper), params)
    assert tilted.best_value - exact.best_value <= 1.1 * delta


def test_linear_objective_estimates_decrease():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    objective = LinearObjective([1.0, 2.0])
    result = vaidya_run(objective, box, VaidyaParams.practical(t_max=150))
    estimates = [visit.value_estimate for visit in result.visited]
    assert estimates[0] == pytest.approx(0.0, abs=1e-9)
    assert all(later < earlier for earlier, later in zip(estimates, estimates[1:]))
    assert objective.minimum_value(box) == pytest.approx(-3.0)
    assert result.best_value <= -2.9


def test_zero_subgradient_stops_the_run():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    optimal = lambda point: CutResponse(SUBGRADIENT_CUT, np.zeros(2), value_estimate=0.0)
    result = vaidya_run(optimal, box, VaidyaParams(t_max=20))
    assert result.stop_reason == "zero-subgradient"
    assert len(result.events) == len(result.visited) == 1
    np.testing.assert_allclose(result.best_point, 0.0, atol=1e-8)


def test_oracle_with_wrong_dimension_is_rejected():
    box = box_polytope([-1.0, -1.0], [1.0, 1.0])
    with pytest.raises(DegenerateCutError):
        vaidya_run(lambda point: CutResponse(SUBGRADIENT_CUT, [1.0]), box, VaidyaParams(t_max=1))


def test_iteration_count_matches_bound():
    args = (1.0, 1e-3, 2.0, 2, 1.0, 0.5, 0.1)
    t = vaidya_iterations(*args)
    epsilon, delta, b_range, m, radius, inner_radius, zeta = args
    assert vaidya_bound(b_range, m, radius, inner_radius, zeta, t, delta) <= epsilon
    assert vaidya_bound(b_range, m, radius, inner_radius, zeta, t - 1, delta) > epsilon
    with pytest.raises(InvalidParameterError):
        vaidya_iterations(1e-3, 1e-3, *args[2:])
