"""P1 finite element solver for the semilinear diffusion problem
Delta u + a(x, u) = 0 in Omega, u = psi on the boundary, where a is lambda*u
in the background and a region-wise polynomial sum_j lambda_j u^j inside the
inclusion layers. Newton iteration starts from the solve of the linearization
at zero and produces Cauchy-data measurements (psi, normal flux).

Sign convention: with K the stiffness matrix and b_a(u) the load of a(x, u),
the discrete weak form reads (K u - b_a(u))_i = <du/dnu, phi_i> on boundary
test functions and = 0 on interior ones. The boundary flux is recovered
variationally from that residual (lumped boundary mass), which is exact for
piecewise-constant flux at non-corner nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, SolverError
from .mesh import TriMesh

__all__ = [
    "ContentModel",
    "FemField",
    "CauchyData",
    "boundary_arc_coordinates",
    "assemble_stiffness",
    "assemble_linearized",
    "content_load_vector",
    "manufactured_source",
    "solve_semilinear",
    "dirichlet_to_neumann",
    "h1_norm",
    "l2_norm",
    "l2_error",
    "boundary_trace_norm",
    "SmallDataReport",
    "small_data_bound",
]


# ---------------------------------------------------------------------------
# Content models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContentModel:
    """Semilinear content a(x, u): background_lambda * u outside the inclusion
    (region tag 0) and sum_j layers[l-1][j-1] * u^j in the layer with tag l.

    class_tag:
      "single": one layer, no structural constraint beyond nonemptiness.
      "A": per-layer polynomials with adjacent layers distinct.
      "B": linear layers (one coefficient each) around a polynomial core;
           adjacent linear layers must differ.
    """

    background_lambda: complex
    layers: tuple
    class_tag: str = "single"

    def __post_init__(self):
        layers = tuple(tuple(complex(c) for c in layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "background_lambda", complex(self.background_lambda))
        if self.class_tag not in ("single", "A", "B"):
            raise ConfigError(f"unknown content class {self.class_tag!r}")
        if not layers or any(len(layer) == 0 for layer in layers):
            raise ConfigError("every layer needs at least one coefficient")
        if self.class_tag == "single" and len(layers) != 1:
            raise ConfigError("single-layer content must have exactly one layer")
        if self.class_tag == "A":
            for l in range(len(layers) - 1):
                if layers[l] == layers[l + 1]:
                    raise ConfigError(
                        f"layers {l} and {l + 1} have identical coefficients"
                    )
        if self.class_tag == "B":
            for l in range(len(layers) - 1):
                if len(layers[l]) != 1:
                    raise ConfigError("non-core layers must be linear in class B")
            # lambda_l != lambda_{l+1} for l = 1..N-2 (core exempt)
            for l in range(len(layers) - 2):
                if layers[l][0] == layers[l + 1][0]:
                    raise ConfigError(
                        f"adjacent linear layers {l} and {l + 1} coincide"
                    )

    @property
    def n_layers(self):
        return len(self.layers)

    def _coeffs(self, tag: int):
        if tag == 0:
            return (self.background_lambda,)
        if tag > len(self.layers):
            raise ConfigError(f"region tag {tag} has no layer coefficients")
        return self.layers[tag - 1]

    def evaluate(self, tags, u):
        """a(x, u) vectorized over quadrature points with region tags."""
        tags = np.asarray(tags)
        u = np.asarray(u, dtype=complex)
        out = np.zeros_like(u)
        for tag in np.unique(tags):
            mask = tags == tag
            acc = np.zeros(np.count_nonzero(mask), dtype=complex)
            for j, lam in enumerate(self._coeffs(int(tag)), start=1):
                acc += lam * u[mask] ** j
            out[mask] = acc
        return out

    def evaluate_derivative(self, tags, u):
        """d/du a(x, u) vectorized over quadrature points with region tags."""
        tags = np.asarray(tags)
        u = np.asarray(u, dtype=complex)
        out = np.zeros_like(u)
        for tag in np.unique(tags):
            mask = tags == tag
            acc = np.zeros(np.count_nonzero(mask), dtype=complex)
            for j, lam in enumerate(self._coeffs(int(tag)), start=1):
                acc += j * lam * u[mask] ** (j - 1)
            out[mask] = acc
        return out


# ---------------------------------------------------------------------------
# Fields and Cauchy data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FemField:
    """Nodal P1 field on a mesh, with the Newton residual history of the solve
    that produced it (empty for directly constructed fields)."""

    mesh: TriMesh
    values: np.ndarray
    newton_residuals: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.mesh.n_nodes,):
            raise SolverError("field/mesh size mismatch")
        if not np.all(np.isfinite(vals)):
            raise SolverError("field contains non-finite values")

    def boundary_values(self):
        order = self.mesh.boundary_nodes()
        return self.values[order]

    def interpolate(self, points):
        """P1 interpolation at arbitrary points inside the mesh."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        corners = self.mesh.nodes[self.mesh.triangles]  # (T, 3, 2)
        a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
        det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (
            c[:, 0] - a[:, 0]
        ) * (b[:, 1] - a[:, 1])
        out = np.empty(len(pts), dtype=complex)
        for i, p in enumerate(pts):
            w1 = (
                (b[:, 0] - p[0]) * (c[:, 1] - p[1])
                - (c[:, 0] - p[0]) * (b[:, 1] - p[1])
            ) / det
            w2 = (
                (c[:, 0] - p[0]) * (a[:, 1] - p[1])
                - (a[:, 0] - p[0]) * (c[:, 1] - p[1])
            ) / det
            w3 = 1.0 - w1 - w2
            inside = (w1 >= -1e-10) & (w2 >= -1e-10) & (w3 >= -1e-10)
            if not np.any(inside):
                raise SolverError(f"point {p} lies outside the mesh")
            t = int(np.argmax(inside))
            out[i] = (
                w1[t] * self.values[self.mesh.triangles[t, 0]]
                + w2[t] * self.values[self.mesh.triangles[t, 1]]
                + w3[t] * self.values[self.mesh.triangles[t, 2]]
            )
        return out if np.asarray(points).ndim > 1 else out[0]


def boundary_arc_coordinates(points):
    """Normalized arc length in [0, 1) for an ordered CCW boundary loop, with
    the origin at the lexicographically smallest point (mesh independent)."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    total = float(np.sum(seg))
    start = np.lexsort((pts[:, 1], pts[:, 0]))[0]
    return (s - s[start]) % total / total


@dataclass(frozen=True)
class CauchyData:
    """One boundary measurement: Dirichlet trace and recovered normal flux at
    the ordered (CCW) outer boundary nodes."""

    boundary_indices: np.ndarray
    points: np.ndarray
    psi: np.ndarray
    dnu: np.ndarray
    mesh_size: float

    def __post_init__(self):
        for name in ("boundary_indices", "points", "psi", "dnu"):
            object.__setattr__(self, name, np.asarray(getattr(self, name)))
        if not (len(self.psi) == len(self.dnu) == len(self.points)):
            raise SolverError("psi and dnu must match the boundary node count")

    def arc_coordinates(self):
        """Normalized arc length in [0, 1) per node, CCW, with the origin at
        the lexicographically smallest boundary point (mesh independent)."""
        return boundary_arc_coordinates(self.points)

    def sampled_at(self, arc_targets):
        """(psi, dnu) linearly interpolated at normalized arc positions."""
        s = self.arc_coordinates()
        order = np.argsort(s)
        s_sorted = s[order]
        grid = np.concatenate([s_sorted, [s_sorted[0] + 1.0]])

        def interp(vals):
            v = vals[order]
            vg = np.concatenate([v, [v[0]]])
            re = np.interp(arc_targets, grid, vg.real, period=1.0)
            im = np.interp(arc_targets, grid, vg.imag, period=1.0)
            return re + 1j * im

        return interp(self.psi), interp(self.dnu)

    def to_csv(self, path):
        lines = ["node,x,y,re_psi,im_psi,re_dnu,im_dnu"]
        for i, idx in enumerate(self.boundary_indices):
            x, y = self.points[i]
            lines.append(
                f"{int(idx)},{float(x)!r},{float(y)!r},"
                f"{float(self.psi[i].real)!r},{float(self.psi[i].imag)!r},"
                f"{float(self.dnu[i].real)!r},{float(self.dnu[i].imag)!r}"
            )
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def _triangle_geometry(mesh):
    p = mesh.nodes[mesh.triangles]
    areas = mesh.signed_areas()
    # gradients of the barycentric basis: grad phi_i = rot90(p_{i+2} - p_{i+1}) / 2A
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        grads[:, i, 0] = -e[:, 1]
        grads[:, i, 1] = e[:, 0]
    grads /= (2.0 * areas)[:, None, None]
    return areas, grads


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    """P1 stiffness matrix (integral of grad phi_i . grad phi_j)."""
    areas, grads = _triangle_geometry(mesh)
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(mesh.triangles[:, i])
            cols.append(mesh.triangles[:, j])
            vals.append(areas * np.einsum("td,td->t", grads[:, i], grads[:, j]))
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes, mesh.n_nodes),
    )
    return K.tocsr()


_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def _midpoint_data(mesh, u_values):
    """u at the 3 edge midpoints of every triangle, with matching tags/areas."""
    tris = mesh.triangles
    u = np.asarray(u_values, dtype=complex)
    mid_u = np.stack([(u[tris[:, a]] + u[tris[:, b]]) / 2.0 for a, b in _EDGE_PAIRS], axis=1)
    return mid_u


def _weighted_mass(mesh, weights):
    """Matrix of integral(w phi_i phi_j) by the edge-midpoint rule (exact for
    piecewise-constant w times quadratics). weights: (T, 3) per edge midpoint."""
    areas = mesh.signed_areas()
    tris = mesh.triangles
    rows, cols, vals = [], [], []
    for m, (a, b) in enumerate(_EDGE_PAIRS):
        wm = areas / 3.0 * weights[:, m]
        for r, c in ((a, a), (a, b), (b, a), (b, b)):
            rows.append(tris[:, r])
            cols.append(tris[:, c])
            vals.append(wm * 0.25)
    M = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_nodes, mesh.n_nodes), dtype=complex,
    )
    return M.tocsr()


def assemble_linearized(mesh: TriMesh, content: ContentModel, u_values) -> sp.csr_matrix:
    """Weak-form matrix of v -> -(Delta v + da/du(x, u_current) v):
    K - M_w with w = da/du at the quadrature points. Full matrix; callers
    eliminate Dirichlet rows by slicing to interior indices.
    """
    u = np.asarray(u_values, dtype=complex)
    if u.shape != (mesh.n_nodes,):
        raise SolverError("u_current does not match the mesh")
    mid_u = _midpoint_data(mesh, u)
    tags = np.repeat(mesh.region_tags[:, None], 3, axis=1)
    w = content.evaluate_derivative(tags.ravel(), mid_u.ravel()).reshape(mid_u.shape)
    K = assemble_stiffness(mesh).astype(complex)
    return (K - _weighted_mass(mesh, w)).tocsr()


def content_load_vector(mesh: TriMesh, content: ContentModel, u_values, source=None):
    """Load vector of integral((a(x, u) + g) phi_i), edge-midpoint rule.

    source: optional callable g(points, region_tags) -> complex, a
    verification-only inhomogeneity for manufactured solutions. It receives
    the owning triangle's region tag because quadrature points on an
    interface belong to triangles on both sides and a piecewise g must match
    the assembly's classification, not a pointwise one.
    """
    areas = mesh.signed_areas()
    tris = mesh.triangles
    mid_u = _midpoint_data(mesh, u_values)
    tags = np.repeat(mesh.region_tags[:, None], 3, axis=1)
    vals = content.evaluate(tags.ravel(), mid_u.ravel()).reshape(mid_u.shape)
    if source is not None:
        p = mesh.nodes[tris]
        for m, (a, b) in enumerate(_EDGE_PAIRS):
            mids = 0.5 * (p[:, a] + p[:, b])
            vals[:, m] += np.asarray(source(mids, mesh.region_tags), dtype=complex)
    b = np.zeros(mesh.n_nodes, dtype=complex)
    for m, (a, b_idx) in enumerate(_EDGE_PAIRS):
        contrib = areas / 3.0 * vals[:, m] * 0.5
        np.add.at(b, tris[:, a], contrib)
        np.add.at(b, tris[:, b_idx], contrib)
    return b


def manufactured_source(content: ContentModel, exact_u: Callable, exact_laplacian: Callable):
    """Source g with Delta u* + a(x, u*) + g = 0 for a prescribed smooth u*:
    g(x) = -Delta u*(x) - a(x, u*(x)), region-tag aware."""

    def g(points, tags):
        u = np.asarray(exact_u(points), dtype=complex)
        return -np.asarray(exact_laplacian(points), dtype=complex) - content.evaluate(tags, u)

    return g


# ---------------------------------------------------------------------------
# Newton solver
# ---------------------------------------------------------------------------

def _boundary_dirichlet(mesh, psi):
    order = mesh.boundary_nodes()
    if callable(psi):
        vals = np.asarray(psi(mesh.nodes[order]), dtype=complex)
    else:
        vals = np.asarray(psi, dtype=complex)
        if vals.shape != (len(order),):
            raise SolverError(
                f"psi must have one value per boundary node ({len(order)}), got {vals.shape}"
            )
    return order, vals


def _sparse_solve(A, rhs, history):
    try:
        lu = spla.splu(A.tocsc())
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(
            f"linearized system is singular: {exc}", residual_history=history
        ) from None
    if not np.all(np.isfinite(x)):
        raise SolverError(
            "linearized solve produced non-finite values", residual_history=history
        )
    return x


def solve_semilinear(
    mesh: TriMesh,
    content: ContentModel,
    psi,
    newton_tol: float = 1e-10,
    max_iter: int = 25,
    source: Optional[Callable] = None,
    smallness: Optional[float] = None,
) -> FemField:
    """Newton solve of Delta u + a(x, u) (+ g) = 0, u = psi on the boundary.

    The first iterate solves the linearization at zero; each step then solves
    the Frechet derivative system K - M_{da/du(u)}. Residuals are Euclidean
    norms of the interior weak-form residual; history is recorded on the
    returned field and on any non-convergence error.

    smallness: optional cap on the boundary trace norm of psi, modeling the
    small-data hypothesis; exceeding it is an error.
    """
    order, psi_vals = _boundary_dirichlet(mesh, psi)
    if smallness is not None:
        nrm = boundary_trace_norm(mesh, psi_vals)
        if nrm > smallness:
            raise SolverError(
                f"boundary data norm {nrm:.3e} exceeds the smallness threshold {smallness:.3e}"
            )
    n = mesh.n_nodes
    interior = np.setdiff1d(np.arange(n), order)

    u = np.zeros(n, dtype=complex)
    u[order] = psi_vals
    if not np.any(psi_vals) and source is None:
        return FemField(mesh=mesh, values=u, newton_residuals=())

    K = assemble_stiffness(mesh).astype(complex)
    history = []

    def residual(u_curr):
        b = content_load_vector(mesh, content, u_curr, source=source)
        return (K @ u_curr - b)[interior]

    # initial iterate: linearization at zero (a(x,0) = 0, da/du at 0);
    # the source load alone is the content load evaluated at u = 0
    A0 = assemble_linearized(mesh, content, np.zeros(n, dtype=complex))
    rhs_int = -(A0[interior][:, order] @ psi_vals)
    if source is not None:
        src_load = content_load_vector(mesh, content, np.zeros(n, dtype=complex), source=source)
        rhs_int = rhs_int + src_load[interior]
    u[interior] = _sparse_solve(A0[interior][:, interior], np.asarray(rhs_int), history)

    res = residual(u)
    history.append(float(np.linalg.norm(res)))
    iterations = 0
    while history[-1] > newton_tol:
        if iterations >= max_iter:
            raise SolverError(
                f"Newton did not reach {newton_tol:.1e} in {max_iter} iterations "
                f"(last residual {history[-1]:.3e})",
                residual_history=history,
            )
        J = assemble_linearized(mesh, content, u)
        delta = _sparse_solve(J[interior][:, interior], -res, history)
        u[interior] += delta
        res = residual(u)
        history.append(float(np.linalg.norm(res)))
        iterations += 1
    return FemField(mesh=mesh, values=u, newton_residuals=tuple(history))


def dirichlet_to_neumann(field: FemField, content: ContentModel, source=None) -> CauchyData:
    """Cauchy data of a solved field: the normal flux at boundary nodes is
    recovered variationally from the weak residual against boundary basis
    functions, divided by the lumped boundary mass.
    """
    mesh = field.mesh
    K = assemble_stiffness(mesh).astype(complex)
    b = content_load_vector(mesh, content, field.values, source=source)
    r = K @ field.values - b
    order = mesh.boundary_nodes()
    pts = mesh.nodes[order]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    lumped = 0.5 * (seg + np.roll(seg, 1))
    dnu = r[order] / lumped
    return CauchyData(
        boundary_indices=order,
        points=pts,
        psi=field.values[order],
        dnu=dnu,
        mesh_size=mesh.mesh_size,
    )


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _mass_matrix(mesh):
    return _weighted_mass(mesh, np.ones((mesh.n_triangles, 3)))


def l2_norm(field: FemField) -> float:
    M = _mass_matrix(field.mesh)
    v = field.values
    return float(np.sqrt(np.real(np.conj(v) @ (M @ v))))


def h1_norm(field: FemField) -> float:
    K = assemble_stiffness(field.mesh)
    M = _mass_matrix(field.mesh)
    v = field.values
    return float(np.sqrt(np.real(np.conj(v) @ (M @ v)) + np.real(np.conj(v) @ (K @ v))))


def l2_error(field: FemField, exact: Callable) -> float:
    """L2 distance to an exact solution, edge-midpoint quadrature."""
    mesh = field.mesh
    areas = mesh.signed_areas()
    p = mesh.nodes[mesh.triangles]
    mid_u = _midpoint_data(mesh, field.values)
    err2 = 0.0
    for m, (a, b) in enumerate(_EDGE_PAIRS):
        mids = 0.5 * (p[:, a] + p[:, b])
        diff = mid_u[:, m] - np.asarray(exact(mids), dtype=complex)
        err2 += float(np.sum(areas / 3.0 * np.abs(diff) ** 2))
    return np.sqrt(err2)


def boundary_trace_norm(mesh: TriMesh, values) -> float:
    """Discrete trace-norm surrogate: boundary L2 plus the scale-invariant
    tangential difference seminorm (sum of squared jumps between neighbors)."""
    order = mesh.boundary_nodes()
    vals = np.asarray(values, dtype=complex)
    if vals.shape != (len(order),):
        raise SolverError("values must be given at the ordered boundary nodes")
    pts = mesh.nodes[order]
    seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
    lumped = 0.5 * (seg + np.roll(seg, 1))
    l2sq = float(np.sum(lumped * np.abs(vals) ** 2))
    jumps = np.abs(np.roll(vals, -1) - vals) ** 2
    return float(np.sqrt(l2sq + np.sum(jumps)))


# ---------------------------------------------------------------------------
# Small-data scaling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmallDataReport:
    eps: tuple
    norms: tuple
    ratios: tuple
    passed: bool


def small_data_bound(
    mesh: TriMesh,
    content: ContentModel,
    psi0,
    eps_list: Sequence[float],
    factor: float = 2.0,
    newton_tol: float = 1e-10,
) -> SmallDataReport:
    """Solve with psi = eps * psi0 over eps_list and check that the discrete
    stability ratio ||u||_H1 / ||psi||_trace stays within `factor` of itself
    across the range (the discrete form of ||u|| <= C ||psi||)."""
    order, psi_vals = _boundary_dirichlet(mesh, psi0)
    eps_list = [float(e) for e in eps_list]
    norms, ratios = [], []
    for eps in eps_list:
        fld = solve_semilinear(mesh, content, eps * psi_vals, newton_tol=newton_tol)
        nrm = h1_norm(fld)
        norms.append(nrm)
        ratios.append(nrm / boundary_trace_norm(mesh, eps * psi_vals))
    passed = max(ratios) / min(ratios) < factor
    return SmallDataReport(tuple(eps_list), tuple(norms), tuple(ratios), passed)
