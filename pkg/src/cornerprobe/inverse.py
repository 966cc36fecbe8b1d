"""Reconstruction and distinguishability experiments on boundary Cauchy data.

Four recovery paths, all driven by a scalar misfit between measured and
simulated Neumann traces under identical Dirichlet traces:

* convex-polygon shape search (derivative-free Nelder-Mead over vertex
  coordinates with convexity repair),
* coefficient recovery from apex values through a generalized Vandermonde
  system,
* coefficient recovery from boundary data (Gauss-Newton least squares with
  finite-difference Jacobian),
* nested-layer peeling that recovers interfaces outside-in and re-fits the
  per-layer coefficients with shapes frozen.

Synthetic data for experiments is generated on a finer mesh than the
inversion mesh (different node placement) and compared through arc-length
resampling, so the inversion never sees its own discretization ("inverse
crime" avoidance). Estimators follow the scikit-learn fit/attributes
convention; the functional core underneath is usable on its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import least_squares, linear_sum_assignment, minimize
from scipy.spatial import ConvexHull
from sklearn.base import BaseEstimator

from .errors import ConfigError, CornerProbeError, RecoveryError
from .forward import (
    CauchyData,
    ContentModel,
    boundary_arc_coordinates,
    dirichlet_to_neumann,
    solve_semilinear,
)
from .geometry import ConvexPolytope, NestedPartition
from .mesh import triangulate

__all__ = [
    "RecoveryProblem",
    "synthesize_cauchy_data",
    "resample_cauchy",
    "cauchy_gap",
    "boundary_misfit",
    "forward_vandermonde",
    "CoefficientRecovery",
    "recover_coefficients",
    "repair_convex_position",
    "polygon_vertex_distance",
    "PolygonShapeEstimator",
    "CoefficientEstimator",
    "NestEstimator",
    "recovery_report_json",
]


# ---------------------------------------------------------------------------
# Problems and synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RecoveryProblem:
    """A recovery experiment: the domain, its boundary measurements, and the
    hypothesis class searched over.

    hypothesis_class: "convex_polygon" (vertex count in params), "nest"
    (class tag and layer count in params), or "corona".
    """

    domain: ConvexPolytope
    measurements: tuple
    hypothesis_class: str
    hypothesis_params: dict

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if len(self.measurements) < 1:
            raise RecoveryError("a recovery problem needs at least one measurement")
        if self.hypothesis_class not in ("convex_polygon", "nest", "corona"):
            raise RecoveryError(
                f"unknown hypothesis class {self.hypothesis_class!r}"
            )


def synthesize_cauchy_data(
    domain: ConvexPolytope,
    interfaces,
    content: ContentModel,
    psi,
    h_mesh: float,
    refinement: float = 2.0,
) -> CauchyData:
    """Forward-solve on a mesh `refinement` times finer than h_mesh and return
    the boundary Cauchy data. The finer mesh has different node placement from
    any inversion mesh at h_mesh, avoiding the inverse crime."""
    mesh = triangulate(domain, list(interfaces), h_mesh / refinement)
    field = solve_semilinear(mesh, content, psi)
    return dirichlet_to_neumann(field, content)


def resample_cauchy(data: CauchyData, reference: CauchyData) -> CauchyData:
    """Interpolate one measurement onto another's boundary discretization by
    normalized arc length."""
    arcs = reference.arc_coordinates()
    psi, dnu = data.sampled_at(arcs)
    return CauchyData(
        boundary_indices=reference.boundary_indices,
        points=reference.points,
        psi=psi,
        dnu=dnu,
        mesh_size=reference.mesh_size,
    )


def _boundary_weights(points):
    seg = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    return 0.5 * (seg + np.roll(seg, 1))


def cauchy_gap(a: CauchyData, b: CauchyData, relative: bool = True) -> float:
    """Weighted boundary-L2 distance between Neumann traces of two
    measurements on the same discretization with identical Dirichlet traces,
    normalized (if relative) by the larger trace norm. Symmetric and zero on
    identical data."""
    if len(a.psi) != len(b.psi) or not np.allclose(
        a.points, b.points, rtol=0.0, atol=1e-12
    ):
        raise RecoveryError("Cauchy data live on different boundary discretizations")
    w = _boundary_weights(a.points)
    psi_scale = max(
        np.sqrt(np.sum(w * np.abs(a.psi) ** 2)),
        np.sqrt(np.sum(w * np.abs(b.psi) ** 2)),
        1e-300,
    )
    psi_mismatch = np.sqrt(np.sum(w * np.abs(a.psi - b.psi) ** 2)) / psi_scale
    if psi_mismatch > 1e-6:
        raise RecoveryError(
            f"Dirichlet traces differ by {psi_mismatch:.3e}; the gap compares "
            "Neumann traces under identical Dirichlet data"
        )
    dist = float(np.sqrt(np.sum(w * np.abs(a.dnu - b.dnu) ** 2)))
    if not relative:
        return dist
    scale = max(
        float(np.sqrt(np.sum(w * np.abs(a.dnu) ** 2))),
        float(np.sqrt(np.sum(w * np.abs(b.dnu) ** 2))),
        1e-300,
    )
    return dist / scale


def _smooth_boundary_mask(points, angle_tol=1e-6):
    """Mask of boundary nodes where the boundary does not turn. The
    variational flux recovery is O(h) at smooth nodes but O(1) at domain
    corners, so corner nodes are excluded from misfits."""
    fwd = np.roll(points, -1, axis=0) - points
    bwd = points - np.roll(points, 1, axis=0)
    fwd = fwd / np.linalg.norm(fwd, axis=1, keepdims=True)
    bwd = bwd / np.linalg.norm(bwd, axis=1, keepdims=True)
    cross = np.abs(bwd[:, 0] * fwd[:, 1] - bwd[:, 1] * fwd[:, 0])
    return cross <= angle_tol


def boundary_misfit(simulated: CauchyData, measured: CauchyData) -> float:
    """cauchy_gap after resampling the measured data onto the simulated
    discretization (the two may come from different meshes), with domain
    corner nodes excluded."""
    target = resample_cauchy(measured, simulated)
    mask = _smooth_boundary_mask(simulated.points)
    w = _boundary_weights(simulated.points)[mask]
    diff = (simulated.dnu - target.dnu)[mask]
    dist = float(np.sqrt(np.sum(w * np.abs(diff) ** 2)))
    scale = max(
        float(np.sqrt(np.sum(w * np.abs(simulated.dnu[mask]) ** 2))),
        float(np.sqrt(np.sum(w * np.abs(target.dnu[mask]) ** 2))),
        1e-300,
    )
    return dist / scale


def _measured_dirichlet(measured: CauchyData):
    """Boundary condition callable reproducing a measured Dirichlet trace on
    any mesh of the same domain (arc-length interpolation)."""

    def psi(points):
        arcs = boundary_arc_coordinates(points)
        vals, _ = measured.sampled_at(arcs)
        return vals

    return psi


# ---------------------------------------------------------------------------
# Vandermonde coefficient recovery
# ---------------------------------------------------------------------------

def _vandermonde_matrix(apex_values):
    u = np.asarray(apex_values, dtype=complex)
    n = len(u)
    powers = np.arange(1, n + 1)
    return u[:, None] ** powers[None, :]


def forward_vandermonde(apex_values, coefficients):
    """Gap values generated by coefficients (lambda_1..lambda_N) at the given
    apex values: row i is sum_j lambda_j * u_i^j."""
    coeffs = np.asarray(coefficients, dtype=complex)
    V = _vandermonde_matrix(apex_values)
    if V.shape[1] != len(coeffs):
        raise RecoveryError("apex values and coefficients must have equal length")
    return V @ coeffs


@dataclass(frozen=True)
class CoefficientRecovery:
    coefficients: np.ndarray
    condition_number: float


def recover_coefficients(apex_values, gap_values) -> CoefficientRecovery:
    """Solve the generalized Vandermonde system V lambda = gaps, with
    V_ij = u_i^j (j = 1..N, no constant column). Requires pairwise-distinct,
    nonzero apex values (the distinctness product hypothesis, assumption B)."""
    u = np.asarray(apex_values, dtype=complex)
    gaps = np.asarray(gap_values, dtype=complex)
    if len(u) != len(gaps):
        raise RecoveryError("apex values and gap values must have equal length")
    scale = float(np.max(np.abs(u))) if len(u) else 0.0
    if scale == 0.0:
        raise RecoveryError("assumption B violated: all apex values are zero")
    for i in range(len(u)):
        if abs(u[i]) <= 1e-14 * scale:
            raise RecoveryError(
                f"assumption B violated: apex value u_{i} = {u[i]:.6g} is zero"
            )
        for j in range(i + 1, len(u)):
            if abs(u[i] - u[j]) <= 1e-14 * scale:
                raise RecoveryError(
                    "assumption B violated: distinctness factor "
                    f"(u_{j} - u_{i}) vanishes (both {u[i]:.6g})"
                )
    V = _vandermonde_matrix(u)
    coeffs = np.linalg.solve(V, gaps)
    return CoefficientRecovery(
        coefficients=coeffs, condition_number=float(np.linalg.cond(V))
    )


# ---------------------------------------------------------------------------
# Polygon utilities
# ---------------------------------------------------------------------------

def repair_convex_position(vertices):
    """Project a 2D vertex set to convex position: order the hull CCW and push
    any interior (reflex) vertex onto the hull boundary, nudged outward so the
    polygon stays strictly convex with the full vertex count."""
    pts = np.asarray(vertices, dtype=float).copy()
    diam = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) * 2.0
    nudge = max(1e-9 * diam, 1e-12)
    try:
        hull = ConvexHull(pts)
    except Exception as exc:
        raise RecoveryError(f"degenerate vertex set: {exc}") from exc
    on_hull = set(int(i) for i in hull.vertices)
    centroid = pts[hull.vertices].mean(axis=0)
    for i in range(len(pts)):
        if i in on_hull:
            continue
        # project onto the hull boundary and step slightly outside it
        best, best_d2 = None, np.inf
        hv = pts[hull.vertices]
        for k in range(len(hv)):
            a, b = hv[k], hv[(k + 1) % len(hv)]
            ab = b - a
            t = np.clip(np.dot(pts[i] - a, ab) / max(np.dot(ab, ab), 1e-300), 0.0, 1.0)
            proj = a + t * ab
            d2 = float(np.sum((pts[i] - proj) ** 2))
            if d2 < best_d2:
                best, best_d2 = proj, d2
        out = best - centroid
        out /= max(np.linalg.norm(out), 1e-300)
        pts[i] = best + nudge * out
    # CCW ordering by angle about the centroid
    ang = np.arctan2(pts[:, 1] - centroid[1], pts[:, 0] - centroid[0])
    return pts[np.argsort(ang)]


def polygon_vertex_distance(a: ConvexPolytope, b: ConvexPolytope) -> float:
    """Largest matched vertex-to-vertex distance under the optimal pairing."""
    if a.n_vertices != b.n_vertices:
        raise RecoveryError("polygons have different vertex counts")
    cost = np.linalg.norm(
        a.vertices[:, None, :] - b.vertices[None, :, :], axis=2
    )
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols]))


# ---------------------------------------------------------------------------
# Simulation helper shared by the estimators
# ---------------------------------------------------------------------------

def _simulate(domain, interfaces, content, measured, h_mesh):
    mesh = triangulate(domain, list(interfaces), h_mesh)
    field = solve_semilinear(mesh, content, _measured_dirichlet(measured))
    return dirichlet_to_neumann(field, content)


def _total_misfit(domain, interfaces, content, measurements, h_mesh):
    total = 0.0
    for measured in measurements:
        simulated = _simulate(domain, interfaces, content, measured, h_mesh)
        total += boundary_misfit(simulated, measured)
    return total / len(measurements)


_PENALTY = 1e6


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

class PolygonShapeEstimator(BaseEstimator):
    """Convex-polygon inclusion recovery from a single boundary measurement.

    Nelder-Mead over the 2V vertex coordinates; each candidate is repaired to
    convex position, meshed together with the domain, forward-solved under the
    measured Dirichlet trace, and scored by the relative Neumann-trace misfit.

    Parameters
    ----------
    domain: the outer convex polygon.
    content: ContentModel used during simulation (true or co-estimated).
    initial_polygon: starting guess for the inclusion.
    h_mesh: inversion mesh size.
    max_iterations: Nelder-Mead iteration budget.
    misfit_tol: immediate-return threshold; if the final misfit also exceeds
        stagnation_tol the fit raises with diagnostics.
    stagnation_tol: maximum acceptable final misfit (None disables the check).

    Attributes after fit: polygon_, misfit_, history_, n_evaluations_.
    """

    def __init__(
        self,
        domain: ConvexPolytope,
        content: ContentModel,
        initial_polygon: ConvexPolytope,
        h_mesh: float = 0.05,
        max_iterations: int = 400,
        misfit_tol: float = 1e-12,
        stagnation_tol: Optional[float] = None,
    ):
        self.domain = domain
        self.content = content
        self.initial_polygon = initial_polygon
        self.h_mesh = h_mesh
        self.max_iterations = max_iterations
        self.misfit_tol = misfit_tol
        self.stagnation_tol = stagnation_tol

    def fit(self, measurements, y=None):
        if isinstance(measurements, CauchyData):
            measurements = [measurements]
        measurements = list(measurements)
        if len(measurements) != 1:
            raise RecoveryError("polygon shape recovery uses exactly one measurement")
        history = []

        def objective(flat):
            try:
                poly = ConvexPolytope(repair_convex_position(flat.reshape(-1, 2)))
                misfit = _total_misfit(
                    self.domain, [poly], self.content, measurements, self.h_mesh
                )
            except CornerProbeError:
                history.append(_PENALTY)
                return _PENALTY
            history.append(misfit)
            return misfit

        x0 = self.initial_polygon.vertices.ravel().astype(float)
        first = objective(x0)
        if first <= self.misfit_tol:
            self.polygon_ = ConvexPolytope(
                repair_convex_position(x0.reshape(-1, 2))
            )
            self.misfit_ = first
            self.history_ = history
            self.n_evaluations_ = 1
            return self

        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": self.max_iterations,
                "xatol": 1e-4 * self.h_mesh,
                "fatol": 1e-12,
                "initial_simplex": _vertex_simplex(x0, 0.08 * _scale_of(x0)),
            },
        )
        self.polygon_ = ConvexPolytope(
            repair_convex_position(result.x.reshape(-1, 2))
        )
        self.misfit_ = float(result.fun)
        self.history_ = history
        self.n_evaluations_ = len(history)
        if self.stagnation_tol is not None and self.misfit_ > self.stagnation_tol:
            raise RecoveryError(
                f"shape search stagnated at misfit {self.misfit_:.3e} "
                f"(tolerance {self.stagnation_tol:.1e})",
                diagnostics={
                    "history": history,
                    "final_vertices": self.polygon_.vertices.tolist(),
                    "evaluations": len(history),
                },
            )
        return self


def _scale_of(flat):
    pts = flat.reshape(-1, 2)
    return float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))


def _vertex_simplex(x0, step):
    """Initial Nelder-Mead simplex: x0 plus one coordinate-step vertex each."""
    n = len(x0)
    simplex = np.tile(x0, (n + 1, 1))
    for i in range(n):
        simplex[i + 1, i] += step
    return simplex


class CoefficientEstimator(BaseEstimator):
    """Content-coefficient recovery with the inclusion geometry known.

    Gauss-Newton least squares (finite-difference Jacobian) over the real
    coefficient vector (lambda_1..lambda_N) of the inclusion polynomial,
    matching simulated to measured Neumann traces across all measurements.

    Attributes after fit: coefficients_, misfit_, condition_number_,
    rank_deficient_, history_.
    """

    def __init__(
        self,
        domain: ConvexPolytope,
        inclusion: ConvexPolytope,
        background_lambda: complex,
        n_coefficients: int = 1,
        h_mesh: float = 0.05,
        initial_coefficients=None,
        max_iterations: int = 60,
        condition_limit: float = 1e8,
    ):
        self.domain = domain
        self.inclusion = inclusion
        self.background_lambda = background_lambda
        self.n_coefficients = n_coefficients
        self.h_mesh = h_mesh
        self.initial_coefficients = initial_coefficients
        self.max_iterations = max_iterations
        self.condition_limit = condition_limit

    def _content(self, coeffs):
        return ContentModel(
            background_lambda=self.background_lambda,
            layers=(tuple(coeffs),),
        )

    def fit(self, measurements, y=None):
        if isinstance(measurements, CauchyData):
            measurements = [measurements]
        measurements = list(measurements)
        mesh = triangulate(self.domain, [self.inclusion], self.h_mesh)
        history = []

        def residuals(coeffs):
            content = self._content(coeffs)
            out = []
            for measured in measurements:
                field = solve_semilinear(
                    mesh, content, _measured_dirichlet(measured)
                )
                simulated = dirichlet_to_neumann(field, content)
                target = resample_cauchy(measured, simulated)
                mask = _smooth_boundary_mask(simulated.points)
                w = np.sqrt(_boundary_weights(simulated.points)[mask])
                diff = w * (simulated.dnu - target.dnu)[mask]
                out.append(diff.real)
                out.append(diff.imag)
            r = np.concatenate(out)
            history.append(float(np.linalg.norm(r)))
            return r

        x0 = (
            np.ones(self.n_coefficients)
            if self.initial_coefficients is None
            else np.asarray(self.initial_coefficients, dtype=float)
        )
        result = least_squares(
            residuals, x0, method="lm", max_nfev=self.max_iterations * (len(x0) + 1)
        )
        if not result.success:
            raise RecoveryError(
                f"coefficient fit did not converge: {result.message}",
                diagnostics={"history": history},
            )
        sv = np.linalg.svd(result.jac, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
        self.coefficients_ = result.x.copy()
        self.misfit_ = float(np.linalg.norm(result.fun))
        self.condition_number_ = cond
        self.rank_deficient_ = bool(cond > self.condition_limit)
        self.history_ = history
        return self


class NestEstimator(BaseEstimator):
    """Nested-layer recovery by onion peeling.

    Interfaces are recovered outside-in: each stage runs a joint Nelder-Mead
    search over one interface's vertex coordinates together with that layer's
    coefficients (so coefficient compensation is resolved inside the stage),
    with all other layers frozen at their current estimates; after the shapes,
    all per-layer coefficients are re-fit by Gauss-Newton least squares with
    the geometry frozen. Repeats for `n_sweeps` passes. A stage failure aborts
    with the completed prefix of layers in the error diagnostics.

    Both the coefficients and the location of the misfit minimum in shape
    space inherit an O(h) bias from the forward solve, and layer size trades
    off against layer coefficient along a nearly flat valley, so coarse-mesh
    estimates of one contaminate the other. `h_mesh` therefore accepts a
    per-sweep schedule (e.g. ``(0.05, 0.025)``): early sweeps localise the
    interfaces cheaply, later sweeps sharpen them on finer meshes. The
    coefficient re-fit is a cheap least-squares solve and runs on the
    `h_polish` mesh (default: the finest shape mesh). Measured data must come
    from a mesh at least twice as fine as the finest mesh used here.

    Class "A" allows per-layer polynomials (adjacent layers distinct); class
    "B" is linear layers around a core. Coefficient estimates are per-layer
    linear coefficients (class B) or per-layer coefficient tuples (class A).

    Attributes after fit: partition_, coefficients_, misfit_, stages_.
    """

    def __init__(
        self,
        domain: ConvexPolytope,
        class_tag: str,
        background_lambda: complex,
        initial_partition: NestedPartition,
        initial_coefficients,
        h_mesh: float = 0.08,
        h_polish: float | None = None,
        max_iterations: int = 200,
        n_sweeps: int = 1,
        misfit_tol: float = 0.0,
    ):
        self.domain = domain
        self.class_tag = class_tag
        self.background_lambda = background_lambda
        self.initial_partition = initial_partition
        self.initial_coefficients = initial_coefficients
        self.h_mesh = h_mesh
        self.h_polish = h_polish
        self.max_iterations = max_iterations
        self.n_sweeps = n_sweeps
        self.misfit_tol = misfit_tol

    def _content(self, coefficients):
        layers = tuple(
            tuple(layer) if np.iterable(layer) else (layer,)
            for layer in coefficients
        )
        tag = self.class_tag if len(layers) > 1 else "single"
        return ContentModel(
            background_lambda=self.background_lambda,
            layers=layers,
            class_tag=tag,
        )

    def fit(self, measurements, y=None):
        if isinstance(measurements, CauchyData):
            measurements = [measurements]
        measurements = list(measurements)
        interfaces = [
            ConvexPolytope(np.array(p.vertices, dtype=float))
            for p in self.initial_partition.layers
        ]
        coefficients = [
            tuple(np.atleast_1d(np.asarray(c, dtype=complex)))
            for c in self.initial_coefficients
        ]
        if len(coefficients) != len(interfaces):
            raise RecoveryError("one coefficient group per layer is required")
        h_schedule = (
            list(self.h_mesh)
            if np.iterable(self.h_mesh)
            else [self.h_mesh] * self.n_sweeps
        )
        if len(h_schedule) != self.n_sweeps:
            raise ConfigError("h_mesh schedule must provide one entry per sweep")
        h_polish = self.h_polish or min(h_schedule)
        stages = []
        if self.misfit_tol > 0.0:
            initial = _total_misfit(
                self.domain, interfaces, self._content(coefficients),
                measurements, h_schedule[0],
            )
            if initial <= self.misfit_tol:
                self.partition_ = NestedPartition(layers=tuple(interfaces))
                self.coefficients_ = [np.array(layer) for layer in coefficients]
                self.misfit_ = initial
                self.stages_ = [{"kind": "initial", "misfit": initial}]
                return self
        try:
            # refit coefficients at the initial geometry first: coefficient
            # error dominates the misfit at high contrast and would otherwise
            # bias the first shape stage
            coefficients, misfit = self._coefficient_stage(
                interfaces, coefficients, measurements, h_polish
            )
            stages.append(
                {
                    "sweep": -1,
                    "kind": "coefficients",
                    "h_mesh": h_polish,
                    "misfit": misfit,
                }
            )
            for sweep, h_sweep in enumerate(h_schedule):
                for layer in range(len(interfaces)):
                    (
                        interfaces[layer],
                        coefficients[layer],
                        misfit,
                        evals,
                    ) = self._shape_stage(
                        interfaces, coefficients, layer, measurements, h_sweep
                    )
                    stages.append(
                        {
                            "sweep": sweep,
                            "layer": layer,
                            "kind": "shape",
                            "h_mesh": h_sweep,
                            "misfit": misfit,
                            "evaluations": evals,
                        }
                    )
                coefficients, misfit = self._coefficient_stage(
                    interfaces, coefficients, measurements, h_polish
                )
                stages.append(
                    {
                        "sweep": sweep,
                        "kind": "coefficients",
                        "h_mesh": h_polish,
                        "misfit": misfit,
                    }
                )
        except CornerProbeError as exc:
            raise RecoveryError(
                f"nest recovery aborted: {exc}",
                diagnostics={
                    "completed_stages": stages,
                    "interfaces": [p.vertices.tolist() for p in interfaces],
                    "coefficients": [
                        [complex(c) for c in layer] for layer in coefficients
                    ],
                },
            ) from exc
        self.partition_ = NestedPartition(layers=tuple(interfaces))
        self.coefficients_ = [np.array(layer) for layer in coefficients]
        self.misfit_ = _total_misfit(
            self.domain, interfaces, self._content(coefficients),
            measurements, h_polish,
        )
        self.stages_ = stages
        return self

    def _shape_stage(self, interfaces, coefficients, layer, measurements, h):
        n_coords = 2 * interfaces[layer].n_vertices
        n_coeffs = len(coefficients[layer])
        evals = [0]

        def split(flat):
            verts = flat[:n_coords].reshape(-1, 2)
            layer_coeffs = tuple(flat[n_coords:])
            trial_coeffs = list(coefficients)
            trial_coeffs[layer] = layer_coeffs
            return verts, trial_coeffs

        def objective(flat):
            evals[0] += 1
            verts, trial_coeffs = split(flat)
            trial = list(interfaces)
            try:
                trial[layer] = ConvexPolytope(repair_convex_position(verts))
                _validate_nesting(self.domain, trial)
                return _total_misfit(
                    self.domain, trial, self._content(trial_coeffs),
                    measurements, h,
                )
            except CornerProbeError:
                return _PENALTY

        x0 = np.concatenate(
            [
                interfaces[layer].vertices.ravel().astype(float),
                np.real(coefficients[layer]).astype(float),
            ]
        )
        coeff_scale = max(float(np.max(np.abs(x0[n_coords:]))), 1.0)
        # contract the search step with the sweep resolution: once a coarse
        # sweep has localised the interface, the remaining error is O(h)
        step = min(0.05 * _scale_of(x0[:n_coords]), float(h))
        simplex = _vertex_simplex(x0, step)
        for k in range(n_coeffs):
            simplex[n_coords + 1 + k] = x0
            simplex[n_coords + 1 + k, n_coords + k] += 0.1 * coeff_scale
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "maxiter": self.max_iterations,
                "xatol": 1e-4 * h,
                "fatol": 1e-12,
                "initial_simplex": simplex,
            },
        )
        verts, trial_coeffs = split(result.x)
        poly = ConvexPolytope(repair_convex_position(verts))
        return poly, trial_coeffs[layer], float(result.fun), evals[0]

    def _coefficient_stage(self, interfaces, coefficients, measurements, h):
        sizes = [len(layer) for layer in coefficients]
        splits = np.cumsum(sizes)[:-1]
        mesh = triangulate(self.domain, interfaces, h)

        def unpack(x):
            return [tuple(part) for part in np.split(x, splits)]

        def residuals(x):
            content = self._content(unpack(x))
            out = []
            for measured in measurements:
                field = solve_semilinear(
                    mesh, content, _measured_dirichlet(measured)
                )
                simulated = dirichlet_to_neumann(field, content)
                target = resample_cauchy(measured, simulated)
                mask = _smooth_boundary_mask(simulated.points)
                w = np.sqrt(_boundary_weights(simulated.points)[mask])
                diff = w * (simulated.dnu - target.dnu)[mask]
                out.append(diff.real)
                out.append(diff.imag)
            return np.concatenate(out)

        x0 = np.concatenate([np.real(layer) for layer in coefficients])
        result = least_squares(residuals, x0, method="lm")
        return unpack(result.x), float(np.linalg.norm(result.fun))


def _validate_nesting(domain, interfaces):
    """Candidate interfaces must be strictly nested inside the domain."""
    outer = domain
    for poly in interfaces:
        if not np.all(outer.contains(poly.vertices, strict=True)):
            raise RecoveryError("candidate interface escapes its enclosing layer")
        outer = poly


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def recovery_report_json(path, hypothesis, misfit, geometry=None,
                         coefficients=None, history=None, timings=None):
    """Recovery report: hypothesis, iteration count, final misfit, recovered
    geometry/coefficients, and per-stage timings."""
    payload = {
        "hypothesis": hypothesis,
        "iterations": len(history) if history is not None else None,
        "finalMisfit": float(misfit),
        "geometry": geometry,
        "coefficients": (
            None
            if coefficients is None
            else [[c.real, c.imag] for c in np.atleast_1d(coefficients).astype(complex)]
        ),
        "timings": timings or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return payload
