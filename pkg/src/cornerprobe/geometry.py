"""Geometric primitives: truncated corners, probe directions, convex polytopes,
nested partitions and corona shapes, plus the exact-distance helpers used by
their validators.

All objects are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import GeometryError

__all__ = [
    "TruncatedCorner",
    "ProbeDirection",
    "ConvexPolytope",
    "NestedPartition",
    "Spike",
    "CoronaShape",
    "NestValidation",
    "CoronaValidation",
    "choose_probe_direction",
    "vertex_corner",
    "validate_nest",
    "validate_corona",
    "point_in_convex_polygon",
    "rotation_2d",
]


def _unit(v, name="vector"):
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise GeometryError(f"{name} must be nonzero")
    return v / nrm


def rotation_2d(angle):
    """2x2 rotation matrix for a counterclockwise rotation by `angle`."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def point_in_convex_polygon(points, vertices, strict=False, tol=0.0):
    """Membership test against a CCW-ordered convex polygon.

    points: (m, 2) or (2,); returns bool array (or scalar for a single point).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    verts = np.asarray(vertices, dtype=float)
    edges = np.roll(verts, -1, axis=0) - verts
    # cross product of edge with (point - edge start), per edge per point
    rel = pts[:, None, :] - verts[None, :, :]
    cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
    if strict:
        inside = np.all(cross > tol, axis=1)
    else:
        inside = np.all(cross >= -tol, axis=1)
    return inside if np.asarray(points).ndim == 2 else bool(inside[0])


# ---------------------------------------------------------------------------
# Truncated corners and probe directions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncatedCorner:
    """A strictly convex corner truncated at radius h: a sector in 2D, a
    circular or polyhedral cone in 3D, intersected with the ball B_h(apex).
    """

    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    radius: float
    kind: str = "sector"
    edges: Optional[tuple] = None

    def __post_init__(self):
        apex = np.asarray(self.apex, dtype=float)
        axis = _unit(self.axis, "axis")
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "axis", axis)
        n = apex.shape[0]
        if n not in (2, 3) or axis.shape[0] != n:
            raise GeometryError("apex and axis must both be 2D or 3D")
        if self.kind not in ("sector", "circular_cone", "polyhedral_cone"):
            raise GeometryError(f"unknown corner kind {self.kind!r}")
        if (self.kind == "sector") != (n == 2):
            raise GeometryError("sector corners are 2D; cone corners are 3D")
        if not 0.0 < self.half_angle < np.pi / 2:
            raise GeometryError(
                "corner not strictly convex: half angle must lie in (0, pi/2), "
                f"got {self.half_angle}"
            )
        if not self.radius > 0.0:
            raise GeometryError("truncation radius must be positive")
        if self.kind == "polyhedral_cone":
            if self.edges is None or len(self.edges) < 3:
                raise GeometryError("polyhedral cone needs >= 3 edges")
            edges = tuple(_unit(e, "edge") for e in self.edges)
            for i in range(len(edges)):
                for j in range(i + 1, len(edges)):
                    if np.linalg.norm(np.cross(edges[i], edges[j])) < 1e-12:
                        raise GeometryError(f"edges {i} and {j} are parallel")
            cosines = np.array([e @ axis for e in edges])
            if np.any(np.arccos(np.clip(cosines, -1, 1)) > self.half_angle + 1e-12):
                raise GeometryError(
                    "polyhedral cone edges do not fit inside the circumscribed "
                    "circular cone of the stated half angle"
                )
            object.__setattr__(self, "edges", edges)
        elif self.edges is not None:
            raise GeometryError("edges are only meaningful for polyhedral cones")

    @property
    def dimension(self):
        return self.apex.shape[0]

    @property
    def theta_bounds(self):
        """(theta_min, theta_max) of a 2D sector in polar angle."""
        if self.kind != "sector":
            raise GeometryError("theta_bounds is defined for 2D sectors only")
        phi = np.arctan2(self.axis[1], self.axis[0])
        return phi - self.half_angle, phi + self.half_angle

    @property
    def effective_half_angle(self):
        """Opening half angle of the tightest circumscribed circular cone."""
        if self.kind == "polyhedral_cone":
            cosines = np.array([e @ self.axis for e in self.edges])
            return float(np.max(np.arccos(np.clip(cosines, -1, 1))))
        return self.half_angle

    @property
    def lid_measure(self):
        """Surface measure of the spherical lid (arc length in 2D, area in 3D)."""
        if self.kind == "sector":
            return self.radius * 2.0 * self.half_angle
        if self.kind == "circular_cone":
            return self.radius ** 2 * 2.0 * np.pi * (1.0 - np.cos(self.half_angle))
        raise GeometryError("lid_measure not supported for polyhedral cones")

    def _face_normals(self):
        """Inward face normals of a polyhedral cone, edges sorted by azimuth."""
        t1, t2 = _orthonormal_complement(self.axis)
        az = [np.arctan2(e @ t2, e @ t1) for e in self.edges]
        order = np.argsort(az)
        sorted_edges = [self.edges[i] for i in order]
        normals = []
        for i in range(len(sorted_edges)):
            a = sorted_edges[i]
            b = sorted_edges[(i + 1) % len(sorted_edges)]
            nrm = np.cross(a, b)
            if nrm @ self.axis < 0:
                nrm = -nrm
            normals.append(nrm / np.linalg.norm(nrm))
        return normals

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.apex
        r = np.linalg.norm(pts, axis=1)
        ok = r <= self.radius + tol
        with np.errstate(invalid="ignore", divide="ignore"):
            cosang = np.where(r > 0, pts @ self.axis / np.maximum(r, 1e-300), 1.0)
        if self.kind == "polyhedral_cone":
            for nrm in self._face_normals():
                ok &= pts @ nrm >= -tol
        else:
            ok &= cosang >= np.cos(self.half_angle) - tol
        return ok if np.asarray(points).ndim == 2 else bool(ok[0])

    def sample_rays(self, m=10_000):
        """Unit directions covering the (untruncated) cone, apex-relative.

        Deterministic; includes the extremal rays so the worst-case margin of
        Eq-style direction bounds is hit exactly for sectors and circular cones.
        """
        if self.kind == "sector":
            tm, tM = self.theta_bounds
            th = np.linspace(tm, tM, m)
            return np.column_stack([np.cos(th), np.sin(th)])
        t1, t2 = _orthonormal_complement(self.axis)
        # Fibonacci-style spiral over the spherical cap
        k = np.arange(m)
        cmin = np.cos(self.half_angle)
        cos_t = 1.0 - (1.0 - cmin) * (k + 0.5) / m
        cos_t[-1] = cmin  # force the boundary circle into the sample
        sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t ** 2))
        phi = np.pi * (1 + 5 ** 0.5) * k
        dirs = (
            cos_t[:, None] * self.axis
            + (sin_t * np.cos(phi))[:, None] * t1
            + (sin_t * np.sin(phi))[:, None] * t2
        )
        if self.kind == "polyhedral_cone":
            keep = np.ones(m, dtype=bool)
            for nrm in self._face_normals():
                keep &= dirs @ nrm >= -1e-12
            dirs = np.vstack([dirs[keep], np.array(self.edges)])
        return dirs


def _orthonormal_complement(axis):
    """Two unit vectors completing `axis` (3D) to an orthonormal frame."""
    pick = np.zeros(3)
    pick[int(np.argmin(np.abs(axis)))] = 1.0
    t1 = _unit(np.cross(axis, pick))
    t2 = np.cross(axis, t1)
    return t1, t2


@dataclass(frozen=True)
class ProbeDirection:
    """Orthonormal pair (d, d_perp) with the uniform margin zeta against the
    rays of the associated corner: d . xhat <= -zeta < 0.
    """

    d: np.ndarray
    d_perp: np.ndarray
    zeta: float

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        dp = np.asarray(self.d_perp, dtype=float)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "d_perp", dp)
        if abs(np.linalg.norm(d) - 1.0) > 1e-10 or abs(np.linalg.norm(dp) - 1.0) > 1e-10:
            raise GeometryError("d and d_perp must be unit vectors")
        if abs(d @ dp) > 1e-10:
            raise GeometryError("d and d_perp must be orthogonal")
        if not self.zeta > 0.0:
            raise GeometryError("margin zeta must be positive")


def choose_probe_direction(corner: TruncatedCorner, slack: float = 0.0) -> ProbeDirection:
    """Pick d = -axis with the exact margin zeta = cos(theta_eff) - slack.

    theta_eff is the corner half angle (circumscribed-cone angle for polyhedral
    corners), so zeta is exact for sectors and circular cones and a certified
    lower bound for polyhedral ones.
    """
    theta_eff = corner.effective_half_angle
    zeta = float(np.cos(theta_eff)) - slack
    if zeta <= 0.0:
        raise GeometryError(
            "not strictly convex: no direction with a uniform positive margin "
            f"(cos(theta) - slack = {zeta})"
        )
    d = -corner.axis
    if corner.dimension == 2:
        d_perp = np.array([-d[1], d[0]])
    else:
        d_perp, _ = _orthonormal_complement(d)
    return ProbeDirection(d=d, d_perp=d_perp, zeta=zeta)


# ---------------------------------------------------------------------------
# Convex polytopes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvexPolytope:
    """Strictly convex polygon (2D, CCW vertex order) or polyhedron (3D)."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] not in (2, 3) or verts.shape[0] < verts.shape[1] + 1:
            raise GeometryError("need at least n+1 vertices of dimension n in {2,3}")
        object.__setattr__(self, "vertices", verts)
        if self.dimension == 2:
            e = np.roll(verts, -1, axis=0) - verts
            cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
            if np.any(cross <= 0):
                raise GeometryError("2D vertices must be in strictly convex CCW order")
            if self.area <= 0:
                raise GeometryError("degenerate polygon")
        else:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(verts)
            if hull.volume <= 0:
                raise GeometryError("degenerate polyhedron")
            if len(hull.vertices) != len(verts):
                raise GeometryError("3D vertices must all be extreme points (strict convexity)")
            object.__setattr__(self, "_hull", hull)

    @property
    def dimension(self):
        return self.vertices.shape[1]

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def centroid(self):
        return self.vertices.mean(axis=0)

    @property
    def area(self):
        if self.dimension != 2:
            raise GeometryError("area is 2D; use volume in 3D")
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    @property
    def volume(self):
        return float(self._hull.volume)

    @property
    def edges(self):
        """2D boundary segments as (start, end) pairs, CCW."""
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def faces(self):
        """3D hull triangles as (3, 3) arrays."""
        return [self.vertices[s] for s in self._hull.simplices]

    def contains(self, points, strict=False, tol=0.0):
        if self.dimension == 2:
            return point_in_convex_polygon(points, self.vertices, strict=strict, tol=tol)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        eq = self._hull.equations
        vals = pts @ eq[:, :3].T + eq[:, 3]
        inside = np.all(vals < -tol, axis=1) if strict else np.all(vals <= tol, axis=1)
        return inside if np.asarray(points).ndim == 2 else bool(inside[0])

    def boundary_distance(self, points):
        """Distance from points to the boundary (unsigned)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.dimension == 2:
            d = np.full(len(pts), np.inf)
            for a, b in self.edges:
                d = np.minimum(d, _point_segment_distance(pts, a, b))
        else:
            d = np.full(len(pts), np.inf)
            for tri in self.faces():
                d = np.minimum(d, np.array([_point_triangle_distance(p, tri) for p in pts]))
        return d if np.asarray(points).ndim == 2 else float(d[0])

    def scaled(self, factor, center=None):
        c = self.centroid if center is None else np.asarray(center, dtype=float)
        return ConvexPolytope(c + factor * (self.vertices - c))


def vertex_corner(poly: ConvexPolytope, vertex_index: int, h: float) -> TruncatedCorner:
    """Truncated corner induced by a polytope vertex: the intersection of the
    polytope with B_h(vertex).

    Raises GeometryError (carrying .max_h) when h is so large that the ball
    meets boundary elements not incident to the vertex.
    """
    if h <= 0:
        raise GeometryError("h must be positive")
    v = poly.vertices[vertex_index]
    if poly.dimension == 2:
        nv = poly.n_vertices
        prev_v = poly.vertices[(vertex_index - 1) % nv]
        next_v = poly.vertices[(vertex_index + 1) % nv]
        u1 = _unit(prev_v - v)
        u2 = _unit(next_v - v)
        interior = np.arccos(np.clip(u1 @ u2, -1, 1))
        axis = _unit(u1 + u2)
        half_angle = interior / 2.0
        max_h = np.inf
        for i in range(nv):
            if i in ((vertex_index - 1) % nv, vertex_index):
                continue  # the two incident edges
            a = poly.vertices[i]
            b = poly.vertices[(i + 1) % nv]
            max_h = min(max_h, float(_point_segment_distance(v[None, :], a, b)[0]))
        if h > max_h:
            err = GeometryError(
                f"h={h} too large at vertex {vertex_index}: the ball meets a "
                f"non-adjacent edge; maximal admissible h = {max_h}"
            )
            err.max_h = max_h
            raise err
        return TruncatedCorner(apex=v, axis=axis, half_angle=half_angle, radius=h, kind="sector")

    # 3D: edges of the vertex cone point toward the hull-adjacent vertices
    hull = poly._hull
    neighbors = set()
    incident = []
    for simplex in hull.simplices:
        if vertex_index in simplex:
            incident.append(tuple(simplex))
            neighbors.update(int(i) for i in simplex if i != vertex_index)
    edges = tuple(_unit(poly.vertices[i] - v) for i in sorted(neighbors))
    axis = _unit(np.sum(edges, axis=0))
    theta = max(float(np.arccos(np.clip(e @ axis, -1, 1))) for e in edges)
    if theta >= np.pi / 2:
        raise GeometryError("vertex cone is not strictly convex")
    max_h = np.inf
    for simplex in hull.simplices:
        if vertex_index in simplex:
            continue
        tri = poly.vertices[list(simplex)]
        max_h = min(max_h, _point_triangle_distance(v, tri))
    max_h = min(max_h, min(np.linalg.norm(poly.vertices[i] - v) for i in sorted(neighbors)))
    if h > max_h:
        err = GeometryError(
            f"h={h} too large at vertex {vertex_index}; maximal admissible h = {max_h}"
        )
        err.max_h = max_h
        raise err
    return TruncatedCorner(
        apex=v, axis=axis, half_angle=theta, radius=h, kind="polyhedral_cone", edges=edges
    )


# ---------------------------------------------------------------------------
# Nested partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NestedPartition:
    """Strictly nested convex layers, outermost first."""

    layers: tuple

    def __post_init__(self):
        layers = tuple(self.layers)
        if len(layers) < 1:
            raise GeometryError("a nested partition needs at least one layer")
        dims = {p.dimension for p in layers}
        if len(dims) != 1:
            raise GeometryError("all layers must share a dimension")
        object.__setattr__(self, "layers", layers)

    @property
    def n_layers(self):
        return len(self.layers)


@dataclass(frozen=True)
class NestValidation:
    clearances: tuple
    contained: tuple
    passed: bool


def validate_nest(partition: NestedPartition) -> NestValidation:
    """Per-layer clearance report; passes iff every layer is compactly
    contained in its predecessor (positive exact boundary distance).
    """
    clearances, contained = [], []
    for outer, inner in zip(partition.layers, partition.layers[1:]):
        inside = bool(np.all(outer.contains(inner.vertices, strict=True)))
        contained.append(inside)
        if not inside:
            clearances.append(0.0)
            continue
        clearances.append(_boundary_boundary_distance(inner, outer))
    passed = all(contained) and all(c > 0 for c in clearances)
    return NestValidation(tuple(clearances), tuple(contained), passed)


def _boundary_boundary_distance(a: ConvexPolytope, b: ConvexPolytope) -> float:
    if a.dimension == 2:
        best = np.inf
        for p1, q1 in a.edges:
            for p2, q2 in b.edges:
                best = min(best, _segment_segment_distance(p1, q1, p2, q2))
        return float(best)
    best = np.inf
    for t1 in a.faces():
        for t2 in b.faces():
            best = min(best, _triangle_triangle_distance(t1, t2))
    return float(best)


# ---------------------------------------------------------------------------
# Corona shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Spike:
    """A strictly convex cone attached to the corona core, apex outside."""

    apex: np.ndarray
    axis: np.ndarray
    half_angle: float

    def __post_init__(self):
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))
        object.__setattr__(self, "axis", _unit(self.axis, "spike axis"))
        if not 0.0 < self.half_angle < np.pi / 2:
            raise GeometryError("spike half angle must lie in (0, pi/2)")

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(np.asarray(points, dtype=float)) - self.apex
        r = np.linalg.norm(pts, axis=1)
        with np.errstate(invalid="ignore"):
            cosang = np.where(r > 0, pts @ self.axis / np.maximum(r, 1e-300), 1.0)
        return cosang >= np.cos(self.half_angle) - tol


@dataclass(frozen=True)
class CoronaShape:
    core: ConvexPolytope
    spikes: tuple

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        if not self.spikes:
            raise GeometryError("a corona shape needs at least one spike")


@dataclass(frozen=True)
class CoronaValidation:
    apex_outside: tuple
    base_on_core: tuple
    bases_disjoint: bool
    passed: bool


def _sample_core_boundary(core: ConvexPolytope, n_per_element=200):
    if core.dimension == 2:
        pts = []
        for a, b in core.edges:
            t = np.linspace(0.0, 1.0, n_per_element, endpoint=False)
            pts.append(a + t[:, None] * (b - a))
        return np.vstack(pts)
    rng = np.random.default_rng(0)
    pts = []
    for tri in core.faces():
        w = rng.dirichlet(np.ones(3), size=n_per_element)
        pts.append(w @ tri)
    return np.vstack(pts)


def validate_corona(shape: CoronaShape, n_samples_per_element=200) -> CoronaValidation:
    """Checks the corona admissibility conditions: every spike apex outside the
    closed core, every spike base meeting the core boundary, and pairwise
    disjoint base regions on the core boundary.
    """
    core = shape.core
    boundary = _sample_core_boundary(core, n_samples_per_element)
    apex_outside, base_on_core, memberships = [], [], []
    for spike in shape.spikes:
        apex_outside.append(not bool(core.contains(spike.apex[None, :])[0]))
        # base = near-side boundary points in the cone; the infinite cone also
        # sweeps the far side of a convex core, which is not part of the base
        near = np.linalg.norm(boundary - spike.apex, axis=1) < np.linalg.norm(
            core.centroid - spike.apex
        )
        member = spike.contains(boundary) & near
        memberships.append(member)
        base_on_core.append(bool(np.any(member)))
    disjoint = True
    for i in range(len(shape.spikes)):
        for j in range(i + 1, len(shape.spikes)):
            if np.any(memberships[i] & memberships[j]):
                disjoint = False
    passed = all(apex_outside) and all(base_on_core) and disjoint
    return CoronaValidation(tuple(apex_outside), tuple(base_on_core), disjoint, passed)


# ---------------------------------------------------------------------------
# Exact distances
# ---------------------------------------------------------------------------

def _point_segment_distance(points, a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = ab @ ab
    pts = np.atleast_2d(points)
    t = np.clip((pts - a) @ ab / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(pts))
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def _segment_segment_distance(p1, q1, p2, q2):
    """Exact minimal distance between two segments (2D or 3D)."""
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    if a == 0 and e == 0:
        return float(np.linalg.norm(r))
    if a == 0:
        t = np.clip(f / e, 0.0, 1.0)
        return float(np.linalg.norm(p1 - (p2 + t * d2)))
    c = d1 @ r
    if e == 0:
        s = np.clip(-c / a, 0.0, 1.0)
        return float(np.linalg.norm(p1 + s * d1 - p2))
    b = d1 @ d2
    denom = a * e - b * b
    s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom != 0 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t, s = 0.0, np.clip(-c / a, 0.0, 1.0)
    elif t > 1.0:
        t, s = 1.0, np.clip((b - c) / a, 0.0, 1.0)
    return float(np.linalg.norm(p1 + s * d1 - (p2 + t * d2)))


def _point_triangle_distance(p, tri):
    """Exact distance from a 3D point to a triangle (3, 3)."""
    p = np.asarray(p, dtype=float)
    a, b, c = tri
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return float(np.linalg.norm(ap))
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return float(np.linalg.norm(bp))
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return float(np.linalg.norm(p - (a + v * ab)))
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return float(np.linalg.norm(cp))
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return float(np.linalg.norm(p - (a + w * ac)))
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return float(np.linalg.norm(p - (b + w * (c - b))))
    denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom
    return float(np.linalg.norm(p - (a + v * ab + w * ac)))


def _triangle_triangle_distance(t1, t2):
    """Exact minimal distance between two disjoint triangles in 3D."""
    best = np.inf
    for i in range(3):
        for j in range(3):
            best = min(
                best,
                _segment_segment_distance(
                    t1[i], t1[(i + 1) % 3], t2[j], t2[(j + 1) % 3]
                ),
            )
    for p in t1:
        best = min(best, _point_triangle_distance(p, t2))
    for p in t2:
        best = min(best, _point_triangle_distance(p, t1))
    return best
