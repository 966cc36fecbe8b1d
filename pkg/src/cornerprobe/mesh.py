"""Conforming triangular meshes of a convex polygonal domain with embedded
polygonal interfaces.

Interfaces are resolved exactly by mesh edges: their boundary segments are
split into chords no longer than the target mesh size and recovered in the
Delaunay triangulation by iterative midpoint insertion. Element quality is
enforced by inserting circumcenters of oversized triangles (interior points
only, so the outer boundary discretization depends on the outer polygon and
the mesh size alone).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import GeometryError, MeshError
from .geometry import ConvexPolytope, point_in_convex_polygon

__all__ = ["TriMesh", "triangulate", "refine", "save_mesh", "load_mesh"]


@dataclass(frozen=True)
class TriMesh:
    """Immutable conforming triangle mesh.

    nodes: (N, 2) float array.
    triangles: (T, 3) int array, positive orientation.
    region_tags: (T,) int array; 0 = background, k >= 1 = inside interface k
        (innermost containing interface for nested configurations).
    boundary_edges: (B, 2) int array of node pairs on the outer boundary, CCW.
    boundary_normals: (B, 2) outward unit normals, one per boundary edge.
    mesh_size: the target circumradius bound the mesh was built for.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region_tags: np.ndarray
    boundary_edges: np.ndarray
    boundary_normals: np.ndarray
    mesh_size: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=int))
        object.__setattr__(self, "region_tags", np.asarray(self.region_tags, dtype=int))
        object.__setattr__(self, "boundary_edges", np.asarray(self.boundary_edges, dtype=int))
        object.__setattr__(self, "boundary_normals", np.asarray(self.boundary_normals, dtype=float))
        if np.any(self.signed_areas() <= 0):
            raise MeshError("all triangles must have positive signed area")

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def circumradii(self):
        p = self.nodes[self.triangles]
        a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        return a * b * c / (4.0 * np.abs(self.signed_areas()))

    def max_edge_length(self):
        p = self.nodes[self.triangles]
        lengths = [np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)]
        return float(np.max(lengths))

    def edge_set(self):
        edges = set()
        for tri in self.triangles:
            for i in range(3):
                edges.add(frozenset((int(tri[i]), int(tri[(i + 1) % 3]))))
        return edges

    def boundary_nodes(self):
        """Outer boundary node indices, ordered CCW starting from the edge list."""
        order = [int(self.boundary_edges[0, 0])]
        nxt = {int(a): int(b) for a, b in self.boundary_edges}
        while True:
            n = nxt[order[-1]]
            if n == order[0]:
                break
            order.append(n)
        return np.array(order, dtype=int)


def _split_polygon_boundary(poly: ConvexPolytope, target: float):
    """Points along the polygon boundary with chord length <= target, plus the
    list of consecutive constraint segments as point-index pairs into the
    returned array.
    """
    pts, segs = [], []
    for a, b in poly.edges:
        length = np.linalg.norm(b - a)
        m = max(1, int(np.ceil(length / target)))
        for k in range(m):
            pts.append(a + (k / m) * (b - a))
    n = len(pts)
    segs = [(i, (i + 1) % n) for i in range(n)]
    return np.array(pts), segs


def _validate_interfaces(outer, interfaces):
    for i, itf in enumerate(interfaces):
        if not np.all(outer.contains(itf.vertices, strict=True)):
            raise MeshError(f"interface {i} is not strictly inside the outer boundary")
    for i in range(len(interfaces)):
        for j in range(i + 1, len(interfaces)):
            a, b = interfaces[i], interfaces[j]
            a_in_b = np.all(b.contains(a.vertices, strict=True))
            b_in_a = np.all(a.contains(b.vertices, strict=True))
            a_out_b = not np.any(b.contains(a.vertices)) and not np.any(
                a.contains(b.vertices)
            )
            if not (a_in_b or b_in_a or a_out_b):
                raise MeshError(f"interfaces {i} and {j} intersect")


def _lattice_points(outer, spacing, clearance_pts, clearance):
    lo = outer.vertices.min(axis=0)
    hi = outer.vertices.max(axis=0)
    xs = np.arange(lo[0] - spacing, hi[0] + 2 * spacing, spacing)
    ys = np.arange(lo[1] - spacing, hi[1] + 2 * spacing, spacing * np.sqrt(3) / 2)
    pts = []
    for row, y in enumerate(ys):
        off = 0.5 * spacing if row % 2 else 0.0
        for x in xs:
            pts.append((x + off, y))
    pts = np.array(pts)
    inside = point_in_convex_polygon(pts, outer.vertices, strict=True)
    pts = pts[inside]
    if len(clearance_pts):
        d2 = np.min(
            np.sum((pts[:, None, :] - clearance_pts[None, :, :]) ** 2, axis=2), axis=1
        )
        pts = pts[d2 > clearance ** 2]
    return pts


def _missing_segments(points, segments, tri: Delaunay):
    edges = set()
    for simplex in tri.simplices:
        for i in range(3):
            edges.add(frozenset((int(simplex[i]), int(simplex[(i + 1) % 3]))))
    return [s for s in segments if frozenset(s) not in edges]


def _point_segment_d2(p, a, b):
    ab = b - a
    t = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
    proj = a + t * ab
    return float(np.sum((p - proj) ** 2))


def triangulate(outer: ConvexPolytope, interfaces, h_mesh: float, max_rounds: int = 60) -> TriMesh:
    """Conforming Delaunay-type mesh of a convex polygon with embedded
    interface polygons resolved by mesh edges and circumradius <= h_mesh.

    interfaces: list of ConvexPolytope, pairwise nested or disjoint, strictly
    inside `outer`. Deterministic for fixed inputs.
    """
    if outer.dimension != 2:
        raise MeshError("triangulate supports 2D domains only")
    if h_mesh <= 0:
        raise MeshError("h_mesh must be positive")
    interfaces = list(interfaces)
    _validate_interfaces(outer, interfaces)

    # constraint points: boundary of the domain and every interface, split to
    # chords of length <= h_mesh
    pieces = [_split_polygon_boundary(outer, h_mesh)]
    for itf in interfaces:
        pieces.append(_split_polygon_boundary(itf, h_mesh))
    points, segments = [], []
    offset = 0
    n_outer_pts = len(pieces[0][0])
    for pts, segs in pieces:
        points.append(pts)
        segments.extend([(a + offset, b + offset) for a, b in segs])
        offset += len(pts)
    constraint_pts = np.vstack(points)

    spacing = 1.3 * h_mesh
    interior = _lattice_points(outer, spacing, constraint_pts, 0.45 * spacing)
    all_pts = np.vstack([constraint_pts, interior])

    seg_endpoints = [
        (constraint_pts[a].copy(), constraint_pts[b].copy()) for a, b in segments
    ]

    def seg_clearance2(p):
        return min(_point_segment_d2(p, a, b) for a, b in seg_endpoints)

    tri = Delaunay(all_pts)
    for _ in range(max_rounds):
        new_pts = []
        missing = _missing_segments(all_pts, segments, tri)
        if missing:
            # recover constrained segments by midpoint insertion; the segment
            # index pairs stay valid because new points are appended
            mids = {}
            new_segments = []
            for a, b in segments:
                if frozenset((a, b)) in {frozenset(m) for m in missing}:
                    mid_idx = len(all_pts) + len(new_pts)
                    new_pts.append(0.5 * (all_pts[a] + all_pts[b]))
                    new_segments.extend([(a, mid_idx), (mid_idx, b)])
                else:
                    new_segments.append((a, b))
            segments = new_segments
            seg_endpoints = None  # rebuilt below
        else:
            # enforce the circumradius bound with interior circumcenters
            seg_endpoints = [(all_pts[a], all_pts[b]) for a, b in segments]
            p = all_pts[tri.simplices]
            area2 = (
                (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
            )
            keep = np.abs(area2) > 1e-14
            centroids = p.mean(axis=1)
            inside = point_in_convex_polygon(centroids, outer.vertices, strict=True)
            # circumcenters
            ax, ay = p[:, 0, 0], p[:, 0, 1]
            bx, by = p[:, 1, 0], p[:, 1, 1]
            cx, cy = p[:, 2, 0], p[:, 2, 1]
            d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
            with np.errstate(divide="ignore", invalid="ignore"):
                ux = ((ax ** 2 + ay ** 2) * (by - cy) + (bx ** 2 + by ** 2) * (cy - ay) + (cx ** 2 + cy ** 2) * (ay - by)) / d
                uy = ((ax ** 2 + ay ** 2) * (cx - bx) + (bx ** 2 + by ** 2) * (ax - cx) + (cx ** 2 + cy ** 2) * (bx - ax)) / d
            cc = np.column_stack([ux, uy])
            rad = np.linalg.norm(cc - p[:, 0], axis=1)
            bad = keep & inside & (rad > h_mesh)
            if not np.any(bad):
                break
            cand = cc[bad]
            cand_ok = point_in_convex_polygon(cand, outer.vertices, strict=True)
            clearance = (0.6 * h_mesh) ** 2
            for q, ok in zip(cand, cand_ok):
                if ok and seg_clearance2(q) > clearance:
                    new_pts.append(q)
            if not new_pts:
                break  # remaining oversized triangles hug a constraint
        if new_pts:
            all_pts = np.vstack([all_pts, np.array(new_pts)])
        tri = Delaunay(all_pts)
        seg_endpoints = [(all_pts[a], all_pts[b]) for a, b in segments]
    else:
        raise MeshError(f"mesh generation did not settle in {max_rounds} rounds")

    if _missing_segments(all_pts, segments, tri):
        raise MeshError("failed to recover all interface segments as mesh edges")

    simplices = tri.simplices
    p = all_pts[simplices]
    area2 = (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    simplices = simplices[np.abs(area2) > 1e-14]
    # enforce positive orientation
    p = all_pts[simplices]
    area2 = (
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    )
    flip = area2 < 0
    simplices[flip] = simplices[flip][:, ::-1]

    tags = _region_tags(all_pts, simplices, interfaces)
    b_edges, b_normals = _outer_boundary(all_pts, simplices, n_outer_pts_hint=n_outer_pts)
    return TriMesh(
        nodes=all_pts,
        triangles=simplices,
        region_tags=tags,
        boundary_edges=b_edges,
        boundary_normals=b_normals,
        mesh_size=float(h_mesh),
    )


def _region_tags(nodes, triangles, interfaces):
    centroids = nodes[triangles].mean(axis=1)
    tags = np.zeros(len(triangles), dtype=int)
    if not interfaces:
        return tags
    areas = [itf.area for itf in interfaces]
    for k in np.argsort(areas)[::-1]:  # outermost (largest) first; innermost wins
        inside = point_in_convex_polygon(centroids, interfaces[k].vertices, strict=True)
        tags[inside] = k + 1
    return tags


def _outer_boundary(nodes, triangles, n_outer_pts_hint=None):
    count = {}
    for t_idx, tri in enumerate(triangles):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            count.setdefault(frozenset((a, b)), []).append((a, b))
    edges, normals = [], []
    for key, occurrences in count.items():
        if len(occurrences) == 1:
            a, b = occurrences[0]  # CCW triangle orientation: domain on the left
            edges.append((a, b))
            tang = nodes[b] - nodes[a]
            nrm = np.array([tang[1], -tang[0]])
            normals.append(nrm / np.linalg.norm(nrm))
    order = np.lexsort((np.array([e[1] for e in edges]), np.array([e[0] for e in edges])))
    edges = np.array(edges, dtype=int)[order]
    normals = np.array(normals)[order]
    return edges, normals


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement: every triangle split into 4 via edge midpoints.

    Region tags are inherited; interface conformity is preserved because every
    interface edge is bisected in place.
    """
    nodes = list(map(tuple, mesh.nodes))
    index = {}

    def midpoint(a, b):
        key = frozenset((a, b))
        if key not in index:
            index[key] = len(nodes)
            nodes.append(tuple(0.5 * (mesh.nodes[a] + mesh.nodes[b])))
        return index[key]

    triangles, tags = [], []
    for tri, tag in zip(mesh.triangles, mesh.region_tags):
        a, b, c = (int(v) for v in tri)
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        triangles.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        tags.extend([tag] * 4)
    nodes = np.array(nodes)
    triangles = np.array(triangles, dtype=int)
    b_edges, b_normals = _outer_boundary(nodes, triangles)
    return TriMesh(
        nodes=nodes,
        triangles=triangles,
        region_tags=np.array(tags, dtype=int),
        boundary_edges=b_edges,
        boundary_normals=b_normals,
        mesh_size=0.5 * mesh.mesh_size,
    )


def save_mesh(mesh: TriMesh, path):
    """Plain-text serialization; round-trips bit-exactly via repr coordinates."""
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    lines.append(repr(float(mesh.mesh_size)))
    for x, y in mesh.nodes:
        lines.append(f"{float(x)!r} {float(y)!r}")
    for tri, tag in zip(mesh.triangles, mesh.region_tags):
        lines.append(f"{tri[0]} {tri[1]} {tri[2]} {tag}")
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for (a, b), (nx, ny) in zip(mesh.boundary_edges, mesh.boundary_normals):
        lines.append(f"{a} {b} {float(nx)!r} {float(ny)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    head = lines[0].split()
    if head[0] != "nodes" or head[2] != "triangles":
        raise MeshError(f"bad mesh header: {lines[0]!r}")
    n, t = int(head[1]), int(head[3])
    mesh_size = float(lines[1])
    nodes = np.array([[float(v) for v in lines[2 + i].split()] for i in range(n)])
    tris, tags = [], []
    for i in range(t):
        parts = lines[2 + n + i].split()
        tris.append([int(parts[0]), int(parts[1]), int(parts[2])])
        tags.append(int(parts[3]))
    b_head = lines[2 + n + t].split()
    if b_head[0] != "boundary":
        raise MeshError("missing boundary section")
    nb = int(b_head[1])
    b_edges, b_normals = [], []
    for i in range(nb):
        parts = lines[3 + n + t + i].split()
        b_edges.append([int(parts[0]), int(parts[1])])
        b_normals.append([float(parts[2]), float(parts[3])])
    return TriMesh(
        nodes=nodes,
        triangles=np.array(tris, dtype=int),
        region_tags=np.array(tags, dtype=int),
        boundary_edges=np.array(b_edges, dtype=int),
        boundary_normals=np.array(b_normals),
        mesh_size=mesh_size,
    )
