"""Recovery from boundary Cauchy data: gaps, Vandermonde systems, shape and
coefficient estimators, nested-layer peeling."""

import json

import numpy as np
import pytest

from cornerprobe.errors import ConfigError, RecoveryError
from cornerprobe.forward import CauchyData, ContentModel
from cornerprobe.geometry import ConvexPolytope, NestedPartition
from cornerprobe.inverse import (
    CoefficientEstimator,
    NestEstimator,
    PolygonShapeEstimator,
    RecoveryProblem,
    boundary_misfit,
    cauchy_gap,
    forward_vandermonde,
    polygon_vertex_distance,
    recover_coefficients,
    recovery_report_json,
    repair_convex_position,
    resample_cauchy,
    synthesize_cauchy_data,
)

SQUARE = ConvexPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
TRIANGLE = ConvexPolytope(np.array([[0.3, 0.25], [0.75, 0.35], [0.45, 0.7]]))
TRIANGLE2 = ConvexPolytope(np.array([[0.25, 0.3], [0.7, 0.25], [0.5, 0.75]]))


def psi_smooth(points):
    return 0.08 * (
        1.5 + np.sin(3 * points[:, 0]) + np.cos(3 * points[:, 1])
    )


def single_content(*coeffs):
    return ContentModel(background_lambda=1.0, layers=(tuple(coeffs),))


def triangle_data(triangle, content, h=0.1, refinement=2.0, psi=psi_smooth):
    return synthesize_cauchy_data(SQUARE, [triangle], content, psi, h,
                                  refinement=refinement)


# ---------------------------------------------------------------------------
# Problems and Cauchy gaps
# ---------------------------------------------------------------------------

def test_recovery_problem_validation():
    data = triangle_data(TRIANGLE, single_content(4.0), h=0.2)
    problem = RecoveryProblem(SQUARE, (data,), "convex_polygon", {"vertices": 3})
    assert len(problem.measurements) == 1
    with pytest.raises(RecoveryError):
        RecoveryProblem(SQUARE, (), "convex_polygon", {})
    with pytest.raises(RecoveryError):
        RecoveryProblem(SQUARE, (data,), "blob", {})


def test_cauchy_gap_identical_configurations_is_exactly_zero():
    a = triangle_data(TRIANGLE, single_content(4.0))
    b = triangle_data(TRIANGLE, single_content(4.0))
    assert cauchy_gap(a, b) == 0.0


def test_cauchy_gap_distinct_triangles_exceeds_threshold():
    a = triangle_data(TRIANGLE, single_content(4.0), h=0.05)
    b = triangle_data(TRIANGLE2, single_content(4.0), h=0.05)
    assert cauchy_gap(a, b) > 1e-3


def test_cauchy_gap_slightly_scaled_content_is_small_but_nonzero():
    a = triangle_data(TRIANGLE, single_content(4.0))
    b = triangle_data(TRIANGLE, single_content(4.01))
    gap = cauchy_gap(a, b)
    assert 0.0 < gap < 1e-2


def test_cauchy_gap_pseudometric_properties():
    a = triangle_data(TRIANGLE, single_content(4.0))
    b = triangle_data(TRIANGLE, single_content(6.0))
    c = triangle_data(TRIANGLE, single_content(8.0))
    ab = cauchy_gap(a, b, relative=False)
    ba = cauchy_gap(b, a, relative=False)
    ac = cauchy_gap(a, c, relative=False)
    bc = cauchy_gap(b, c, relative=False)
    assert ab == ba
    assert cauchy_gap(a, a, relative=False) == 0.0
    assert ac <= ab + bc + 1e-12


def test_cauchy_gap_rejects_mismatched_discretizations():
    a = triangle_data(TRIANGLE, single_content(4.0), h=0.1)
    b = triangle_data(TRIANGLE, single_content(4.0), h=0.07)
    with pytest.raises(RecoveryError):
        cauchy_gap(a, b)


def test_cauchy_gap_rejects_different_dirichlet_traces():
    a = triangle_data(TRIANGLE, single_content(4.0))
    b = triangle_data(TRIANGLE, single_content(4.0),
                      psi=lambda p: 2.0 * psi_smooth(p))
    with pytest.raises(RecoveryError):
        cauchy_gap(a, b)


def test_distinguishability_monotone_in_symmetric_difference():
    # growing one triangle of a nested family never decreases the gap to the
    # base configuration
    base = triangle_data(TRIANGLE, single_content(4.0), h=0.05)
    gaps = []
    for s in (1.05, 1.15, 1.25):
        grown = ConvexPolytope(
            TRIANGLE.centroid + s * (TRIANGLE.vertices - TRIANGLE.centroid)
        )
        gaps.append(cauchy_gap(base, triangle_data(grown, single_content(4.0),
                                                   h=0.05)))
    assert gaps[0] > 0
    assert all(b >= a * (1 - 1e-9) for a, b in zip(gaps, gaps[1:]))


def test_resample_onto_own_discretization_is_identity():
    a = triangle_data(TRIANGLE, single_content(4.0))
    r = resample_cauchy(a, a)
    np.testing.assert_allclose(r.psi, a.psi, rtol=1e-12)
    np.testing.assert_allclose(r.dnu, a.dnu, rtol=1e-12)


def test_boundary_misfit_across_meshes_is_small_for_true_configuration():
    measured = triangle_data(TRIANGLE, single_content(4.0), h=0.1,
                             refinement=2.0)
    from cornerprobe.inverse import _simulate

    simulated = _simulate(SQUARE, [TRIANGLE], single_content(4.0), measured, 0.1)
    misfit = boundary_misfit(simulated, measured)
    assert 0.0 < misfit < 0.05


# ---------------------------------------------------------------------------
# Vandermonde coefficient recovery
# ---------------------------------------------------------------------------

def test_vandermonde_single_coefficient_is_a_division():
    rec = recover_coefficients([0.3 + 0.1j], [(0.3 + 0.1j) * 2.5])
    assert abs(rec.coefficients[0] - 2.5) < 1e-14
    assert rec.condition_number == pytest.approx(1.0)


def test_vandermonde_two_coefficients_exact():
    coeffs = np.array([1.5 - 0.5j, 2.0 + 1.0j])
    apex = np.array([0.2 + 0.05j, 0.45 - 0.1j])
    gaps = forward_vandermonde(apex, coeffs)
    rec = recover_coefficients(apex, gaps)
    assert np.max(np.abs(rec.coefficients - coeffs)) < 1e-10


def test_vandermonde_round_trip_property():
    rng = np.random.default_rng(11)
    for _ in range(25):
        n = rng.integers(1, 5)
        apex = rng.uniform(0.2, 1.0, n) * np.exp(
            2j * np.pi * np.arange(n) / max(n, 1)
        )
        coeffs = rng.normal(size=n) + 1j * rng.normal(size=n)
        rec = recover_coefficients(apex, forward_vandermonde(apex, coeffs))
        if rec.condition_number < 1e6:
            np.testing.assert_allclose(rec.coefficients, coeffs, atol=1e-8)


def test_vandermonde_rejects_assumption_b_violations():
    with pytest.raises(RecoveryError, match="assumption B"):
        recover_coefficients([0.1, 0.1], [1.0, 1.0])
    with pytest.raises(RecoveryError, match="assumption B"):
        recover_coefficients([0.0, 0.2], [0.0, 1.0])


# ---------------------------------------------------------------------------
# Polygon utilities
# ---------------------------------------------------------------------------

def test_repair_convex_position_preserves_convex_input():
    repaired = repair_convex_position(TRIANGLE.vertices)
    # same vertex set, CCW order
    d = polygon_vertex_distance(TRIANGLE, ConvexPolytope(repaired))
    assert d < 1e-12


def test_repair_convex_position_fixes_interior_vertex():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    repaired = repair_convex_position(pts)
    poly = ConvexPolytope(repaired)  # strict convexity validated on build
    assert poly.n_vertices == 5


def test_polygon_vertex_distance_matching():
    rolled = ConvexPolytope(np.roll(TRIANGLE.vertices, 1, axis=0))
    assert polygon_vertex_distance(TRIANGLE, rolled) < 1e-15
    shifted = ConvexPolytope(TRIANGLE.vertices + [0.02, 0.0])
    assert polygon_vertex_distance(TRIANGLE, shifted) == pytest.approx(0.02)
    with pytest.raises(RecoveryError):
        polygon_vertex_distance(TRIANGLE, SQUARE)


# ---------------------------------------------------------------------------
# Shape estimator
# ---------------------------------------------------------------------------

def test_shape_estimator_accepts_true_polygon_immediately():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.1, refinement=2.0)
    est = PolygonShapeEstimator(
        SQUARE, content, TRIANGLE, h_mesh=0.1, misfit_tol=0.05
    )
    est.fit(data)
    assert est.n_evaluations_ == 1
    assert polygon_vertex_distance(est.polygon_, TRIANGLE) < 1e-12


def test_shape_estimator_recovers_triangle():
    content = single_content(4.0)
    h = 0.05
    data = triangle_data(TRIANGLE, content, h=h, refinement=2.0)
    init = ConvexPolytope(
        TRIANGLE.centroid + 1.15 * (TRIANGLE.vertices - TRIANGLE.centroid)
    )
    est = PolygonShapeEstimator(SQUARE, content, init, h_mesh=h)
    est.fit(data)
    assert polygon_vertex_distance(est.polygon_, TRIANGLE) < 2 * h
    assert est.misfit_ < 0.05
    assert est.n_evaluations_ == len(est.history_)


def test_shape_estimator_stagnation_raises_with_diagnostics():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.1, refinement=2.0)
    init = ConvexPolytope(
        TRIANGLE.centroid + 1.2 * (TRIANGLE.vertices - TRIANGLE.centroid)
    )
    est = PolygonShapeEstimator(
        SQUARE, content, init, h_mesh=0.1, max_iterations=3,
        stagnation_tol=1e-9,
    )
    with pytest.raises(RecoveryError) as err:
        est.fit(data)
    assert "history" in err.value.diagnostics


def test_shape_estimator_requires_single_measurement():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.2)
    est = PolygonShapeEstimator(SQUARE, content, TRIANGLE, h_mesh=0.2)
    with pytest.raises(RecoveryError):
        est.fit([data, data])


# ---------------------------------------------------------------------------
# Coefficient estimator (boundary-misfit path)
# ---------------------------------------------------------------------------

def test_coefficient_estimator_two_coefficients_within_one_percent():
    truth = single_content(4.0, 8.0)
    h = 0.05
    measurements = [
        triangle_data(TRIANGLE, truth, h=h, refinement=2.0,
                      psi=lambda p, e=eps: e * psi_smooth(p) / 0.08)
        for eps in (5e-2, 1e-1)
    ]
    est = CoefficientEstimator(
        SQUARE, TRIANGLE, background_lambda=1.0, n_coefficients=2,
        h_mesh=h, initial_coefficients=[3.0, 6.0],
    )
    est.fit(measurements)
    assert abs(est.coefficients_[0] - 4.0) / 4.0 < 0.01
    assert abs(est.coefficients_[1] - 8.0) / 8.0 < 0.01
    assert not est.rank_deficient_


def test_coefficient_estimator_flags_duplicate_amplitudes():
    truth = single_content(4.0, 8.0)
    h = 0.1
    datum = triangle_data(TRIANGLE, truth, h=h, refinement=2.0,
                          psi=lambda p: 5e-2 * psi_smooth(p) / 0.08)
    est = CoefficientEstimator(
        SQUARE, TRIANGLE, background_lambda=1.0, n_coefficients=2,
        h_mesh=h, initial_coefficients=[3.0, 6.0], condition_limit=100.0,
    )
    est.fit([datum, datum])
    assert est.rank_deficient_
    assert est.condition_number_ > 100.0


# ---------------------------------------------------------------------------
# Nest estimator
# ---------------------------------------------------------------------------

OUTER_SQ = ConvexPolytope(np.array([[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]]))
INNER_SQ = ConvexPolytope(
    np.array([[0.35, 0.35], [0.65, 0.35], [0.65, 0.65], [0.35, 0.65]])
)


def test_class_a_identical_adjacent_layers_rejected():
    with pytest.raises(ConfigError):
        ContentModel(background_lambda=1.0, layers=((2.0,), (2.0,)),
                     class_tag="A")


def test_nest_estimator_single_layer_degenerates_to_polygon():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.1, refinement=2.0)
    est = NestEstimator(
        SQUARE, class_tag="B", background_lambda=1.0,
        initial_partition=NestedPartition(layers=(TRIANGLE,)),
        initial_coefficients=[(4.0,)], h_mesh=0.1, misfit_tol=0.05,
    )
    est.fit(data)
    assert len(est.partition_.layers) == 1
    assert polygon_vertex_distance(est.partition_.layers[0], TRIANGLE) < 1e-12


def test_nest_estimator_requires_coefficients_per_layer():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.2)
    est = NestEstimator(
        SQUARE, class_tag="B", background_lambda=1.0,
        initial_partition=NestedPartition(layers=(OUTER_SQ, INNER_SQ)),
        initial_coefficients=[(4.0,)], h_mesh=0.2,
    )
    with pytest.raises(RecoveryError):
        est.fit(data)


def test_nest_estimator_mesh_schedule_must_match_sweeps():
    content = single_content(4.0)
    data = triangle_data(TRIANGLE, content, h=0.2)
    est = NestEstimator(
        SQUARE, class_tag="B", background_lambda=1.0,
        initial_partition=NestedPartition(layers=(TRIANGLE,)),
        initial_coefficients=[(4.0,)], h_mesh=(0.2, 0.1), n_sweeps=1,
    )
    with pytest.raises(ConfigError):
        est.fit(data)


def test_peeling_idempotence():
    # re-running recovery on data generated from its own output keeps the
    # output (to solver tolerance, certified by the misfit threshold)
    truth = ContentModel(background_lambda=1.0, layers=((4.0,), (8.0,)),
                         class_tag="B")
    data = synthesize_cauchy_data(SQUARE, [OUTER_SQ, INNER_SQ], truth,
                                  psi_smooth, 0.1, refinement=2.0)
    est = NestEstimator(
        SQUARE, class_tag="B", background_lambda=1.0,
        initial_partition=NestedPartition(layers=(OUTER_SQ, INNER_SQ)),
        initial_coefficients=[(4.0,), (8.0,)], h_mesh=0.1,
        max_iterations=30, n_sweeps=1,
    )
    est.fit(data)
    recovered = est.partition_.layers
    coeffs = [tuple(np.real(c)) for c in est.coefficients_]
    own = ContentModel(background_lambda=1.0,
                       layers=tuple(coeffs), class_tag="B")
    own_data = synthesize_cauchy_data(SQUARE, list(recovered), own,
                                      psi_smooth, 0.1, refinement=2.0)
    replay = NestEstimator(
        SQUARE, class_tag="B", background_lambda=1.0,
        initial_partition=est.partition_,
        initial_coefficients=coeffs, h_mesh=0.1, misfit_tol=0.05,
    )
    replay.fit(own_data)
    for before, after in zip(recovered, replay.partition_.layers):
        assert polygon_vertex_distance(before, after) < 1e-12
    for before, after in zip(coeffs, replay.coefficients_):
        np.testing.assert_allclose(np.real(after), before, rtol=1e-12)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def test_recovery_report_json(tmp_path):
    path = tmp_path / "report.json"
    payload = recovery_report_json(
        path, hypothesis="convex_polygon", misfit=1.2e-3,
        geometry=TRIANGLE.vertices.tolist(),
        coefficients=np.array([4.0 + 0j]),
        history=[1.0, 0.5, 1.2e-3], timings={"fit": 9.3},
    )
    on_disk = json.loads(path.read_text())
    assert on_disk == json.loads(json.dumps(payload))
    assert on_disk["iterations"] == 3
    assert on_disk["finalMisfit"] == pytest.approx(1.2e-3)
    assert on_disk["coefficients"] == [[4.0, 0.0]]
