"""Vertex nondegeneracy checks and small-data expansion sweeps."""

import json

import numpy as np
import pytest

from cornerprobe.admissibility import (
    AdmissibilityReport,
    admissibility_report_json,
    check_assumption,
    expansion_to_csv,
    nest_small_data_expansion,
    plane_wave_datum,
    small_data_expansion,
)
from cornerprobe.errors import ConfigError, SolverError
from cornerprobe.forward import ContentModel, FemField
from cornerprobe.geometry import ConvexPolytope, rotation_2d
from cornerprobe.mesh import triangulate

SQUARE = ConvexPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
TRIANGLE = ConvexPolytope(np.array([[0.3, 0.25], [0.75, 0.35], [0.45, 0.7]]))
OUTER = ConvexPolytope(np.array([[0.2, 0.2], [0.8, 0.2], [0.8, 0.8], [0.2, 0.8]]))
INNER = ConvexPolytope(
    np.array([[0.38, 0.38], [0.62, 0.38], [0.62, 0.62], [0.38, 0.62]])
)
EPS_GRID = [1e-1, 1e-2, 1e-3, 1e-4]


def plane_wave_content(eps, lam1, higher=()):
    k = np.sqrt(eps)
    return k, ContentModel(background_lambda=k**2, layers=((lam1, *higher),))


# ---------------------------------------------------------------------------
# Assumption A
# ---------------------------------------------------------------------------

def test_assumption_a_plane_wave_passes_with_expected_margin():
    eps, lam1 = 1e-4, 0.5
    k, content = plane_wave_content(eps, lam1)
    report = check_assumption(
        "A", SQUARE, [TRIANGLE], content,
        plane_wave_datum(eps, k, (1.0, 0.0)), h_mesh=0.05,
    )
    assert report.passed
    assert report.detail == "vertex condition"
    margins = np.abs(report.quantities["content_gap_layer1_measurement0"])
    analytic = abs(k**2 - lam1) * eps
    assert np.all(np.abs(margins / analytic - 1.0) < 0.05)


def test_assumption_a_leading_order_ratio_tends_to_one():
    # margin / |(k^2 - lambda_1) eps| approaches 1 as eps shrinks
    lam1 = 0.5
    deviations = []
    for eps in (1e-2, 1e-3, 1e-4):
        k, content = plane_wave_content(eps, lam1)
        report = check_assumption(
            "A", SQUARE, [TRIANGLE], content,
            plane_wave_datum(eps, k, (1.0, 0.0)), h_mesh=0.05,
        )
        ratio = np.abs(report.quantities["content_gap_layer1_measurement0"])
        ratio = ratio / (abs(k**2 - lam1) * eps)
        deviations.append(float(np.max(np.abs(ratio - 1.0))))
    # the ratio stays near 1 along the grid and is near 1 at the smallest eps
    assert all(d < 0.05 for d in deviations)
    assert deviations[-1] < 0.01


def test_assumption_a_fails_without_content_gap():
    # f = lambda * u everywhere: the gap vanishes identically
    content = ContentModel(background_lambda=1.0, layers=((1.0,),))
    report = check_assumption(
        "A", SQUARE, [TRIANGLE], content,
        plane_wave_datum(1e-2, 1.0, (1.0, 0.0)), h_mesh=0.05,
    )
    assert not report.passed
    assert report.detail == "neither"
    assert report.worst_margin == 0.0


def test_assumption_a_reports_exterior_alternative():
    eps, lam1 = 1e-3, 0.5
    k, content = plane_wave_content(eps, lam1)
    report = check_assumption(
        "A", SQUARE, [TRIANGLE], content,
        plane_wave_datum(eps, k, (1.0, 0.0)), h_mesh=0.05,
    )
    assert "exterior_gap" in report.quantities
    assert report.flags["exterior_gap"]


# ---------------------------------------------------------------------------
# Assumptions B, C, D
# ---------------------------------------------------------------------------

def test_assumption_b_distinct_amplitudes_pass():
    lam1 = 0.5
    k = 1e-2
    content = ContentModel(background_lambda=k**2, layers=((lam1, 0.2),))
    psis = [plane_wave_datum(e, k, (1.0, 0.0)) for e in (1e-4, 2e-4)]
    report = check_assumption("B", SQUARE, [TRIANGLE], content, psis, h_mesh=0.05)
    assert report.passed
    # product ~ prod |eps_j - eps_i| to leading order
    prod = np.abs(report.quantities["pairwise_product_layer1"])
    assert np.all(np.abs(prod / 1e-4 - 1.0) < 0.05)


def test_assumption_b_equal_amplitudes_fail():
    k = 1e-2
    content = ContentModel(background_lambda=k**2, layers=((0.5, 0.2),))
    psis = [plane_wave_datum(1e-4, k, (1.0, 0.0))] * 2
    report = check_assumption("B", SQUARE, [TRIANGLE], content, psis, h_mesh=0.05)
    assert not report.passed
    assert not report.flags["pairwise_product_layer1"]


def test_assumption_c_two_layer_nest_passes_with_expected_margins():
    k = 1e-2
    lam_outer, lam_core = 0.4, 0.9
    content = ContentModel(
        background_lambda=k**2,
        layers=((lam_outer, 0.1), (lam_core, 0.1)),
        class_tag="A",
    )
    groups = [
        [plane_wave_datum(e, k, (1.0, 0.0)) for e in (1e-4, 2e-4)],
        [plane_wave_datum(e, k, (1.0, 0.0)) for e in (3e-4, 4e-4)],
    ]
    report = check_assumption(
        "C", SQUARE, [OUTER, INNER], content, groups, h_mesh=0.05
    )
    assert report.passed
    # inner-layer gap ~ |lambda_1^(1) - lambda_1^(2)| * eps to leading order
    gap = np.abs(report.quantities["content_gap_layer2_measurement0"])
    analytic = abs(lam_outer - lam_core) * 3e-4
    assert np.all(np.abs(gap / analytic - 1.0) < 0.1)


def test_assumption_c_needs_one_group_per_layer():
    k = 1e-2
    content = ContentModel(
        background_lambda=k**2, layers=((0.4,), (0.9, 0.1)), class_tag="B"
    )
    with pytest.raises(ConfigError):
        check_assumption(
            "C", SQUARE, [OUTER, INNER], content,
            [[plane_wave_datum(1e-4, k, (1.0, 0.0))]], h_mesh=0.08,
        )


def test_assumption_d_class_b_nest_passes():
    k = 1e-2
    content = ContentModel(
        background_lambda=k**2, layers=((0.3,), (0.8, 0.1)), class_tag="B"
    )
    report = check_assumption(
        "D", SQUARE, [OUTER, INNER], content,
        plane_wave_datum(1e-3, k, (1.0, 0.0)), h_mesh=0.05,
    )
    assert report.passed
    assert "vertex_value_layer1" in report.quantities
    assert "vertex_value_layer2" in report.quantities


def test_pass_iff_every_quantity_above_tolerance():
    k = 1e-2
    content = ContentModel(
        background_lambda=k**2, layers=((0.3,), (0.8, 0.1)), class_tag="B"
    )
    report = check_assumption(
        "D", SQUARE, [OUTER, INNER], content,
        plane_wave_datum(1e-3, k, (1.0, 0.0)), h_mesh=0.08,
    )
    recomputed = all(
        np.all(np.abs(v) > report.tolerances[name])
        for name, v in report.quantities.items()
    )
    assert report.passed == recomputed


def test_unknown_kind_and_wrong_measurement_count_raise():
    k, content = plane_wave_content(1e-3, 0.5)
    psi = plane_wave_datum(1e-3, k, (1.0, 0.0))
    with pytest.raises(ConfigError):
        check_assumption("E", SQUARE, [TRIANGLE], content, psi)
    with pytest.raises(ConfigError):
        check_assumption("A", SQUARE, [TRIANGLE], content, [psi, psi])


def test_interpolation_outside_mesh_raises():
    mesh = triangulate(SQUARE, [], 0.2)
    field = FemField(mesh, np.zeros(mesh.n_nodes))
    with pytest.raises(SolverError):
        field.interpolate(np.array([[2.0, 2.0]]))


# ---------------------------------------------------------------------------
# Small-data expansions
# ---------------------------------------------------------------------------

def test_small_data_expansion_certifies_o_eps():
    table = small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.5, 0.5), h_mesh=0.05
    )
    assert table.passed
    assert all(b < a for a, b in zip(table.ratios, table.ratios[1:]))
    assert table.slope > 1.2


def test_small_data_expansion_k_squared_dominated_slope_two():
    # lambda_1 scaled away (zeta_2 = 2): the remainder is driven by
    # k^2 psi ~ eps^2, so the log-log slope is about 2
    table = small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.5, 2.0), h_mesh=0.05
    )
    assert table.passed
    assert abs(table.slope - 2.0) < 0.2


def test_small_data_expansion_quadratic_content_slope_two():
    # an O(1) quadratic coefficient contributes ~ eps^2
    table = small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.5, 2.0),
        higher_coefficients=(0.8,), h_mesh=0.05,
    )
    assert table.passed
    assert abs(table.slope - 2.0) < 0.2


def test_expansion_requires_decreasing_grid_and_positive_exponents():
    with pytest.raises(ConfigError):
        small_data_expansion(SQUARE, [TRIANGLE], [1e-3, 1e-2])
    with pytest.raises(ConfigError):
        small_data_expansion(SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.0, 0.5))


def test_nest_expansion_single_layer_reduces_to_single_inclusion():
    single = small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.5, 0.5), h_mesh=0.08
    )
    nest = nest_small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=[0.5, 0.5], h_mesh=0.08
    )
    assert nest.eps == single.eps
    np.testing.assert_allclose(nest.v_norms, single.v_norms, rtol=1e-12)


def test_nest_expansion_two_layer_class_a_passes():
    table = nest_small_data_expansion(
        SQUARE, [OUTER, INNER], EPS_GRID, class_tag="A",
        higher_coefficients=[(0.1,), (0.2,)], h_mesh=0.05,
    )
    assert table.passed
    assert all(b < a for a, b in zip(table.ratios, table.ratios[1:]))


def test_nest_expansion_unscaled_coefficient_fails_as_expected():
    # a layer coefficient held at O(1) violates the scaling hypothesis
    table = nest_small_data_expansion(
        SQUARE, [OUTER, INNER], EPS_GRID, class_tag="A",
        zeta=[0.5, 0.0, 0.5], h_mesh=0.05,
    )
    assert not table.passed


def test_expansion_pass_invariant_under_rigid_motion():
    base = small_data_expansion(
        SQUARE, [TRIANGLE], EPS_GRID, zeta=(0.5, 0.5), h_mesh=0.08
    )
    rot = rotation_2d(0.7)
    shift = np.array([0.3, -0.2])
    moved_domain = ConvexPolytope(SQUARE.vertices @ rot.T + shift)
    moved_triangle = ConvexPolytope(TRIANGLE.vertices @ rot.T + shift)
    moved = small_data_expansion(
        moved_domain, [moved_triangle], EPS_GRID, zeta=(0.5, 0.5),
        direction=rot @ np.array([1.0, 0.0]), h_mesh=0.08,
    )
    assert moved.passed == base.passed
    np.testing.assert_allclose(moved.ratios, base.ratios, rtol=0.05)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def test_report_json_round_trip(tmp_path):
    eps, lam1 = 1e-3, 0.5
    k, content = plane_wave_content(eps, lam1)
    report = check_assumption(
        "A", SQUARE, [TRIANGLE], content,
        plane_wave_datum(eps, k, (1.0, 0.0)), h_mesh=0.08,
    )
    path = tmp_path / "report.json"
    admissibility_report_json(report, path)
    payload = json.loads(path.read_text())
    assert payload["assumption"] == "A"
    assert payload["passed"] == report.passed
    assert set(payload["quantities"]) == set(report.quantities)
    assert payload["detail"] == report.detail


def test_expansion_csv(tmp_path):
    table = small_data_expansion(
        SQUARE, [TRIANGLE], [1e-1, 1e-2], zeta=(0.5, 0.5), h_mesh=0.1
    )
    path = tmp_path / "sweep.csv"
    expansion_to_csv(table, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "eps,v_norm,ratio"
    assert len(lines) == 3
    assert float(lines[1].split(",")[0]) == 1e-1
