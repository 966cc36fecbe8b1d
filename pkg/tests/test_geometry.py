"""Geometry primitives: corners, probe directions, polytopes, nests, coronas."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornerprobe.errors import GeometryError
from cornerprobe.geometry import (
    ConvexPolytope,
    CoronaShape,
    NestedPartition,
    Spike,
    TruncatedCorner,
    choose_probe_direction,
    point_in_convex_polygon,
    rotation_2d,
    validate_corona,
    validate_nest,
    vertex_corner,
)

SQRT2 = np.sqrt(2.0)


def unit_square():
    return ConvexPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def square(lo, hi):
    return ConvexPolytope(np.array([[lo, lo], [hi, lo], [hi, hi], [lo, hi]]))


class TestTruncatedCorner:
    def test_rejects_half_angle_at_pi_over_2(self):
        with pytest.raises(GeometryError, match="convex"):
            TruncatedCorner(
                apex=np.zeros(2), axis=np.array([1.0, 0.0]),
                half_angle=np.pi / 2, radius=1.0,
            )

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(GeometryError):
            TruncatedCorner(
                apex=np.zeros(2), axis=np.array([1.0, 0.0]),
                half_angle=np.pi / 4, radius=0.0,
            )

    def test_axis_normalized(self):
        c = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([3.0, 4.0]),
            half_angle=np.pi / 4, radius=1.0,
        )
        assert np.linalg.norm(c.axis) == pytest.approx(1.0)

    def test_sector_membership(self):
        c = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([1.0, 0.0]),
            half_angle=np.pi / 4, radius=1.0,
        )
        assert c.contains(np.array([0.5, 0.0]))
        assert c.contains(np.array([0.5, 0.49]))
        assert not c.contains(np.array([0.5, 0.6]))
        assert not c.contains(np.array([1.2, 0.0]))

    def test_polyhedral_edges_must_fit(self):
        edges = [
            np.array([np.sin(0.9), 0.0, np.cos(0.9)]),
            np.array([-np.sin(0.9), 0.0, np.cos(0.9)]),
            np.array([0.0, np.sin(0.9), np.cos(0.9)]),
        ]
        with pytest.raises(GeometryError, match="fit"):
            TruncatedCorner(
                apex=np.zeros(3), axis=np.array([0.0, 0.0, 1.0]),
                half_angle=np.pi / 6, radius=1.0,
                kind="polyhedral_cone", edges=edges,
            )

    def test_lid_measure(self):
        c2 = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([1.0, 0.0]),
            half_angle=np.pi / 4, radius=2.0,
        )
        assert c2.lid_measure == pytest.approx(2.0 * np.pi / 2)
        c3 = TruncatedCorner(
            apex=np.zeros(3), axis=np.array([0.0, 0.0, 1.0]),
            half_angle=np.pi / 6, radius=1.0, kind="circular_cone",
        )
        assert c3.lid_measure == pytest.approx(2 * np.pi * (1 - np.cos(np.pi / 6)))


class TestChooseProbeDirection:
    def test_sector_example(self):
        c = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([1.0, 0.0]),
            half_angle=np.pi / 4, radius=1.0,
        )
        pd = choose_probe_direction(c)
        assert np.allclose(pd.d, [-1.0, 0.0])
        assert pd.zeta == pytest.approx(np.cos(np.pi / 4), abs=1e-12)
        # margin over a dense ray sample, the defining inequality
        rays = c.sample_rays(10_000)
        assert np.max(rays @ pd.d) <= -pd.zeta + 1e-12

    def test_polyhedral_margin(self):
        theta = np.pi / 6
        edges = [
            np.array([np.sin(theta) * np.cos(p), np.sin(theta) * np.sin(p), np.cos(theta)])
            for p in (0.0, 2.1, 4.2)
        ]
        c = TruncatedCorner(
            apex=np.zeros(3), axis=np.array([0.0, 0.0, 1.0]),
            half_angle=theta, radius=1.0, kind="polyhedral_cone", edges=edges,
        )
        pd = choose_probe_direction(c)
        assert np.allclose(pd.d, [0.0, 0.0, -1.0])
        assert pd.zeta >= np.cos(np.pi / 6) - 1e-12
        rays = c.sample_rays(10_000)
        assert np.max(rays @ pd.d) <= -pd.zeta + 1e-9

    def test_slack_exhausts_margin(self):
        c = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([1.0, 0.0]),
            half_angle=np.pi / 3, radius=1.0,
        )
        with pytest.raises(GeometryError, match="convex"):
            choose_probe_direction(c, slack=0.6)

    @given(st.floats(0.05, 1.5), st.floats(-np.pi, np.pi))
    @settings(max_examples=30, deadline=None)
    def test_margin_property(self, half_angle, phi):
        c = TruncatedCorner(
            apex=np.zeros(2), axis=np.array([np.cos(phi), np.sin(phi)]),
            half_angle=half_angle, radius=1.0,
        )
        pd = choose_probe_direction(c)
        rays = c.sample_rays(2000)
        assert np.max(rays @ pd.d) <= -pd.zeta + 1e-12


class TestConvexPolytope:
    def test_requires_ccw_convex(self):
        with pytest.raises(GeometryError, match="CCW"):
            ConvexPolytope(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]))

    def test_rejects_collinear(self):
        with pytest.raises(GeometryError):
            ConvexPolytope(np.array([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [0.0, 1.0]]))

    def test_area_and_containment(self):
        sq = unit_square()
        assert sq.area == pytest.approx(1.0)
        assert sq.contains(np.array([0.5, 0.5]))
        assert not sq.contains(np.array([1.5, 0.5]))
        assert sq.contains(np.array([0.0, 0.5]))
        assert not sq.contains(np.array([0.0, 0.5]), strict=True)

    def test_boundary_distance(self):
        sq = unit_square()
        assert sq.boundary_distance(np.array([0.5, 0.5])) == pytest.approx(0.5)
        assert sq.boundary_distance(np.array([2.0, 0.5])) == pytest.approx(1.0)

    def test_3d_tetrahedron(self):
        tet = ConvexPolytope(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        )
        assert tet.volume == pytest.approx(1.0 / 6.0)
        assert tet.contains(np.array([0.1, 0.1, 0.1]))
        assert not tet.contains(np.array([1.0, 1.0, 1.0]))

    def test_3d_rejects_interior_vertex(self):
        with pytest.raises(GeometryError, match="extreme"):
            ConvexPolytope(
                np.array([
                    [0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0],
                    [0.1, 0.1, 0.1],
                ])
            )


class TestVertexCorner:
    def test_unit_square_corner(self):
        c = vertex_corner(unit_square(), 0, 0.1)
        assert c.kind == "sector"
        assert np.allclose(c.apex, [0.0, 0.0])
        assert np.allclose(c.axis, [SQRT2 / 2, SQRT2 / 2])
        assert c.half_angle == pytest.approx(np.pi / 4)
        assert c.radius == 0.1

    def test_equilateral_triangle(self):
        tri = ConvexPolytope(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]]))
        for i in range(3):
            c = vertex_corner(tri, i, 0.1)
            assert c.half_angle == pytest.approx(np.pi / 6)

    def test_h_too_large_reports_max(self):
        with pytest.raises(GeometryError) as exc:
            vertex_corner(unit_square(), 0, 2.0)
        assert exc.value.max_h == pytest.approx(1.0)

    def test_membership_equivalence(self):
        poly = ConvexPolytope(np.array([[0.0, 0.0], [2.0, 0.5], [1.5, 2.0], [0.2, 1.5]]))
        h = 0.3
        c = vertex_corner(poly, 0, h)
        rng = np.random.default_rng(7)
        pts = rng.uniform(-0.5, 0.8, size=(1000, 2))
        in_corner = c.contains(pts)
        in_poly = poly.contains(pts)
        in_ball = np.linalg.norm(pts - poly.vertices[0], axis=1) <= h
        mism = in_corner != (in_poly & in_ball)
        # allow disagreement only within floating tolerance of the boundary
        assert np.all(
            poly.boundary_distance(pts[mism]) < 1e-9
        ) if np.any(mism) else True

    def test_tetrahedron_vertex(self):
        tet = ConvexPolytope(
            np.array([[0.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
        )
        c = vertex_corner(tet, 0, 0.2)
        assert c.kind == "polyhedral_cone"
        assert len(c.edges) == 3
        assert c.contains(np.array([0.05, 0.05, 0.05]))


class TestValidateNest:
    def test_concentric_squares_pass(self):
        rep = validate_nest(NestedPartition((unit_square(), square(0.25, 0.75))))
        assert rep.passed
        assert rep.clearances[0] == pytest.approx(0.25)

    def test_offset_square_fails(self):
        rep = validate_nest(NestedPartition((unit_square(), square(0.5, 1.5))))
        assert not rep.passed
        assert not rep.contained[0]

    def test_touching_fails_with_zero_clearance(self):
        inner = square(0.0, 0.5)  # shares the outer corner
        rep = validate_nest(NestedPartition((unit_square(), inner)))
        assert not rep.passed

    @given(st.floats(0.1, 0.99))
    @settings(max_examples=25, deadline=None)
    def test_shrinking_preserves_pass(self, factor):
        inner = square(0.25, 0.75)
        base = NestedPartition((unit_square(), inner))
        assert validate_nest(base).passed
        shrunk = NestedPartition((unit_square(), inner.scaled(factor)))
        assert validate_nest(shrunk).passed


class TestValidateCorona:
    def make_core(self):
        return ConvexPolytope(
            np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        )

    def test_opposite_spikes_pass(self):
        spikes = (
            Spike(apex=np.array([1.5, 0.0]), axis=np.array([-1.0, 0.0]), half_angle=0.4),
            Spike(apex=np.array([-1.5, 0.0]), axis=np.array([1.0, 0.0]), half_angle=0.4),
        )
        rep = validate_corona(CoronaShape(core=self.make_core(), spikes=spikes))
        assert rep.passed

    def test_apex_inside_fails(self):
        spikes = (
            Spike(apex=np.array([0.0, 0.0]), axis=np.array([1.0, 0.0]), half_angle=0.4),
        )
        rep = validate_corona(CoronaShape(core=self.make_core(), spikes=spikes))
        assert not rep.passed
        assert not rep.apex_outside[0]

    def test_overlapping_bases_fail(self):
        spikes = (
            Spike(apex=np.array([1.5, 0.0]), axis=np.array([-1.0, 0.0]), half_angle=0.5),
            Spike(apex=np.array([1.5, 0.3]), axis=np.array([-1.0, 0.0]), half_angle=0.5),
        )
        rep = validate_corona(CoronaShape(core=self.make_core(), spikes=spikes))
        assert not rep.bases_disjoint
        assert not rep.passed


class TestHelpers:
    def test_rotation_matrix(self):
        R = rotation_2d(np.pi / 2)
        assert np.allclose(R @ np.array([1.0, 0.0]), [0.0, 1.0])

    @given(st.floats(-2, 2), st.floats(-2, 2))
    @settings(max_examples=50, deadline=None)
    def test_point_in_square(self, x, y):
        verts = unit_square().vertices
        expected = (0 <= x <= 1) and (0 <= y <= 1)
        assert point_in_convex_polygon(np.array([x, y]), verts) == expected
