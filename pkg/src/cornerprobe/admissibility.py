"""Nondegeneracy checks at inclusion vertices and small-data expansions.

The recovery guarantees rest on open conditions at the inclusion vertices:
the content gap seen across each interface (outer response minus inner
content, evaluated on the solution) must not vanish, and when several
measurements are used their field values at each vertex must be pairwise
distinct. `check_assumption` verifies these numerically by solving the
forward problem for every supplied boundary datum and interpolating the
FEM field at the vertices.

For scaled incident data psi = eps * e^{ik x.d}, with the wavenumber k and
the leading layer coefficients shrinking as positive powers of eps, the
remainder v = u - psi is asymptotically smaller than eps. The expansion
helpers certify this discretely with two independent checks: ||v||/eps
strictly decreasing along the eps grid, and a log-log slope of ||v|| vs
eps above one. To leading order the vertex margins then equal the
analytic expressions |k^2 - lambda_1| * |psi(x_c)| (single inclusion) and
|lambda_1^(l-1) - lambda_1^(l)| * |psi(x_c)| (nested layers), which makes
the checks quantitatively testable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .forward import ContentModel, FemField, h1_norm, solve_semilinear
from .mesh import triangulate

__all__ = [
    "AdmissibilityReport",
    "ExpansionTable",
    "check_assumption",
    "small_data_expansion",
    "nest_small_data_expansion",
    "plane_wave_datum",
    "admissibility_report_json",
    "expansion_to_csv",
]


# ---------------------------------------------------------------------------
# Scaled plane-wave boundary data
# ---------------------------------------------------------------------------

def plane_wave_datum(eps, wavenumber, direction):
    """Boundary datum psi(x) = eps * e^{ik x.d} as a callable over points."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    k = float(wavenumber)
    e = float(eps)

    def psi(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return e * np.exp(1j * k * points @ d)

    return psi


# ---------------------------------------------------------------------------
# Vertex nondegeneracy checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of one vertex nondegeneracy check.

    quantities maps a condition label to the complex values tested at the
    relevant vertices; flags holds the per-condition pass flag (every value
    has modulus above the tolerance); worst_margin is the smallest modulus
    over all tested quantities.
    """

    assumption: str
    vertices: np.ndarray
    quantities: dict
    tolerance: float
    tolerances: dict
    flags: dict
    passed: bool
    worst_margin: float
    detail: str = ""


def _poly(coefficients, u):
    """sum_j c_j u^j with j starting at 1."""
    u = np.asarray(u, dtype=complex)
    acc = np.zeros_like(u)
    for j, c in enumerate(coefficients, start=1):
        acc += c * u**j
    return acc


def _layer_gap(content, layer, u):
    """Content gap across interface `layer` (1-based): the response of the
    enclosing region minus the content of the layer, both evaluated at u."""
    outer = (
        (content.background_lambda,)
        if layer == 1
        else content.layers[layer - 2]
    )
    return _poly(outer, u) - _poly(content.layers[layer - 1], u)


def _solve_family(mesh, content, data):
    return [solve_semilinear(mesh, content, psi) for psi in data]


def _pairwise_products(values):
    """prod_{i<j} (values[j] - values[i]) columnwise; values is (M, V)."""
    prod = np.ones(values.shape[1], dtype=complex)
    for j in range(values.shape[0]):
        for i in range(j):
            prod *= values[j] - values[i]
    return prod


def _poly_derivative(coefficients, u):
    """d/du of sum_j c_j u^j."""
    u = np.asarray(u, dtype=complex)
    acc = np.zeros_like(u)
    for j, c in enumerate(coefficients, start=1):
        acc += j * c * u ** (j - 1)
    return acc


def _point_error(content, layer, u, h_mesh):
    """Pointwise P1 interpolation error estimate at a vertex on the inner
    side of interface `layer`: (h^2 / 8) |laplacian u| = (h^2 / 8) |a(x, u)|."""
    return (h_mesh**2 / 8.0) * np.abs(_poly(content.layers[layer - 1], u))


def check_assumption(
    kind,
    domain,
    interfaces,
    content: ContentModel,
    measurements,
    h_mesh: float = 0.05,
    tolerance: float | None = None,
) -> AdmissibilityReport:
    """Check one of the vertex nondegeneracy conditions.

    kind "A": single measurement; the content gap at the vertices of the
        outermost interface must not vanish, or alternatively the gap must
        not vanish anywhere outside the inclusion (both are checked; the
        report passes if either holds and `detail` names the one that did).
    kind "B": one measurement per unknown coefficient; every content gap at
        the outer vertices and the pairwise product of vertex field values
        must be nonzero.
    kind "C": measurements grouped per layer (a list of lists); content gaps
        and per-group pairwise products at every layer's vertices.
    kind "D": single measurement on a nest of linear layers; content gaps at
        every layer's vertices and a nonzero field value at each vertex.

    The tolerance defaults to 1e3 times a pointwise discretization error
    estimate; the conditions are open, so a margin is the right notion.
    """
    if kind not in ("A", "B", "C", "D"):
        raise ConfigError(f"unknown assumption kind {kind!r}")
    interfaces = list(interfaces)
    if len(interfaces) != content.n_layers:
        raise ConfigError("one interface per content layer is required")
    mesh = triangulate(domain, interfaces, h_mesh)

    if kind == "C":
        groups = [list(group) for group in measurements]
        if len(groups) != len(interfaces):
            raise ConfigError("assumption C needs one measurement group per layer")
    elif kind == "B":
        groups = [list(measurements)]
    else:
        if callable(measurements):
            measurements = [measurements]
        measurements = list(measurements)
        if len(measurements) != 1:
            raise ConfigError(f"assumption {kind} uses a single measurement")
        groups = [measurements]

    fields = [
        _solve_family(mesh, content, group) for group in groups
    ]  # fields[g][j]

    quantities = {}
    tolerances = {}
    all_vertices = []

    def outer_coeffs(layer):
        return (
            (content.background_lambda,)
            if layer == 1
            else content.layers[layer - 2]
        )

    def gap_tolerance(layer, u, err):
        """First-order propagation of the vertex field error through the gap."""
        sensitivity = np.abs(
            _poly_derivative(outer_coeffs(layer), u)
            - _poly_derivative(content.layers[layer - 1], u)
        )
        return 1e3 * float(np.max(err * sensitivity, initial=0.0))

    if kind in ("A", "B"):
        layer_range = [1]
    else:
        layer_range = list(range(1, len(interfaces) + 1))

    for layer in layer_range:
        verts = interfaces[layer - 1].vertices
        all_vertices.append(verts)
        group = fields[layer - 1] if kind == "C" else fields[0]
        values = np.array([f.interpolate(verts) for f in group])
        errors = np.array(
            [_point_error(content, layer, u, h_mesh) for u in values]
        )
        for j, u in enumerate(values):
            name = f"content_gap_layer{layer}_measurement{j}"
            quantities[name] = _layer_gap(content, layer, u)
            tolerances[name] = gap_tolerance(layer, u, errors[j])
        if kind in ("B", "C") and len(values) > 1:
            name = f"pairwise_product_layer{layer}"
            prod = _pairwise_products(values)
            quantities[name] = prod
            # error of a product: sum over factors of |product| scaled by
            # the factor's relative error; the error of a difference
            # u_j - u_i is driven by the curvature of the difference field
            # (the individual discretization errors largely cancel)
            a_vals = np.array(
                [_poly(content.layers[layer - 1], u) for u in values]
            )
            err = np.zeros(len(verts))
            for j in range(len(values)):
                for i in range(j):
                    factor = np.abs(values[j] - values[i])
                    e_pair = (h_mesh**2 / 8.0) * np.abs(
                        a_vals[j] - a_vals[i]
                    )
                    err += e_pair * np.abs(prod) / np.maximum(factor, 1e-300)
            tolerances[name] = 1e3 * float(np.max(err, initial=0.0))
        if kind == "D":
            name = f"vertex_value_layer{layer}"
            quantities[name] = values[0]
            tolerances[name] = 1e3 * float(np.max(errors[0], initial=0.0))

    if kind == "A":
        # Alternative open condition: the gap is nonzero on the whole
        # exterior region, tested at every strictly exterior mesh node.
        exterior = np.setdiff1d(
            np.unique(mesh.triangles[mesh.region_tags == 0]),
            np.unique(mesh.triangles[mesh.region_tags > 0]),
        )
        u_ext = fields[0][0].values[exterior]
        gap_ext = _poly((content.background_lambda,), u_ext) - _poly(
            content.layers[0], u_ext
        )
        err_ext = (h_mesh**2 / 8.0) * np.abs(
            content.background_lambda * u_ext
        )
        sens = np.abs(
            _poly_derivative((content.background_lambda,), u_ext)
            - _poly_derivative(content.layers[0], u_ext)
        )
        quantities["exterior_gap"] = gap_ext
        tolerances["exterior_gap"] = 1e3 * float(
            np.max(err_ext * sens, initial=0.0)
        )

    if tolerance is not None:
        tolerances = {name: float(tolerance) for name in quantities}

    flags = {
        name: bool(np.all(np.abs(vals) > tolerances[name]))
        for name, vals in quantities.items()
    }
    worst = min(
        (float(np.min(np.abs(v))) for v in quantities.values()),
        default=np.inf,
    )
    detail = ""

    if kind == "A":
        vertex_flags = [f for n, f in flags.items() if n != "exterior_gap"]
        passed_vertex = all(vertex_flags)
        passed = passed_vertex or flags["exterior_gap"]
        detail = (
            "vertex condition"
            if passed_vertex
            else ("exterior condition" if flags["exterior_gap"] else "neither")
        )
    else:
        passed = all(flags.values())

    return AdmissibilityReport(
        assumption=kind,
        vertices=np.vstack(all_vertices),
        quantities=quantities,
        tolerance=max(tolerances.values(), default=0.0),
        tolerances=tolerances,
        flags=flags,
        passed=passed,
        worst_margin=worst,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Small-data expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionTable:
    """Sweep of ||v|| = ||u - psi|| over an eps grid with the fitted log-log
    slope of ||v|| vs eps. Passes iff ||v||/eps is strictly decreasing and
    the slope exceeds one."""

    eps: tuple
    v_norms: tuple
    ratios: tuple
    slope: float
    passed: bool


def _expansion_sweep(domain, interfaces, eps_grid, content_of_eps,
                     wavenumber_of_eps, direction, h_mesh):
    eps_grid = [float(e) for e in eps_grid]
    if sorted(eps_grid, reverse=True) != eps_grid:
        raise ConfigError("eps grid must be strictly decreasing")
    mesh = triangulate(domain, list(interfaces), h_mesh)
    norms = []
    for eps in eps_grid:
        k = wavenumber_of_eps(eps)
        psi = plane_wave_datum(eps, k, direction)
        field = solve_semilinear(mesh, content_of_eps(eps), psi)
        remainder = field.values - psi(mesh.nodes)
        norms.append(h1_norm(FemField(mesh, remainder)))
    ratios = [n / e for n, e in zip(norms, eps_grid)]
    slope = float(
        np.polyfit(np.log(eps_grid), np.log(np.maximum(norms, 1e-300)), 1)[0]
    )
    passed = (
        all(b < a for a, b in zip(ratios, ratios[1:])) and slope > 1.0
    )
    return ExpansionTable(
        tuple(eps_grid), tuple(norms), tuple(ratios), slope, passed
    )


def small_data_expansion(
    domain,
    interfaces,
    eps_grid,
    *,
    zeta=(0.5, 0.5),
    k_scale: float = 1.0,
    lambda_scale: float = 1.0,
    higher_coefficients=(),
    direction=(1.0, 0.0),
    h_mesh: float = 0.05,
) -> ExpansionTable:
    """Single-inclusion expansion: k = k_scale * eps^zeta[0] and
    lambda_1 = lambda_scale * eps^zeta[1]; higher coefficients are held
    fixed. The background responds with k^2 u."""
    z0, z1 = (float(z) for z in zeta)
    if z0 <= 0 or z1 <= 0:
        raise ConfigError("scaling exponents must be positive")

    def content_of_eps(eps):
        lam1 = lambda_scale * eps**z1
        return ContentModel(
            background_lambda=(k_scale * eps**z0) ** 2,
            layers=((lam1, *higher_coefficients),),
        )

    return _expansion_sweep(
        domain, interfaces, eps_grid, content_of_eps,
        lambda eps: k_scale * eps**z0, direction, h_mesh,
    )


def nest_small_data_expansion(
    domain,
    interfaces,
    eps_grid,
    *,
    class_tag: str = "A",
    zeta=None,
    leading_scales=None,
    higher_coefficients=None,
    direction=(1.0, 0.0),
    k_scale: float = 1.0,
    h_mesh: float = 0.05,
) -> ExpansionTable:
    """Nested-layer expansion: k = k_scale * eps^zeta[0] and the leading
    coefficient of layer l scales as leading_scales[l-1] * eps^zeta[l].
    A zeta entry of 0 deliberately violates the scaling hypothesis (the
    corresponding coefficient stays O(1)) so the expected failure of the
    o(eps) property can be demonstrated."""
    interfaces = list(interfaces)
    n = len(interfaces)
    zeta = [0.5] * (n + 1) if zeta is None else [float(z) for z in zeta]
    if len(zeta) != n + 1:
        raise ConfigError("need one exponent for k plus one per layer")
    if zeta[0] <= 0:
        raise ConfigError("the wavenumber exponent must be positive")
    leading_scales = (
        [1.0] * n if leading_scales is None else [float(s) for s in leading_scales]
    )
    higher_coefficients = (
        [()] * n if higher_coefficients is None else list(higher_coefficients)
    )
    if n == 1:
        return small_data_expansion(
            domain, interfaces, eps_grid,
            zeta=(zeta[0], max(zeta[1], 1e-12)),
            k_scale=k_scale, lambda_scale=leading_scales[0],
            higher_coefficients=higher_coefficients[0],
            direction=direction, h_mesh=h_mesh,
        )

    def content_of_eps(eps):
        layers = tuple(
            (leading_scales[l] * eps ** zeta[l + 1], *higher_coefficients[l])
            for l in range(n)
        )
        return ContentModel(
            background_lambda=(k_scale * eps ** zeta[0]) ** 2,
            layers=layers,
            class_tag=class_tag,
        )

    return _expansion_sweep(
        domain, interfaces, eps_grid, content_of_eps,
        lambda eps: k_scale * eps ** zeta[0], direction, h_mesh,
    )


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def admissibility_report_json(report: AdmissibilityReport, path):
    payload = {
        "assumption": report.assumption,
        "vertices": report.vertices.tolist(),
        "quantities": {
            name: [[v.real, v.imag] for v in np.atleast_1d(vals)]
            for name, vals in report.quantities.items()
        },
        "tolerance": report.tolerance,
        "tolerances": report.tolerances,
        "flags": report.flags,
        "passed": report.passed,
        "worstMargin": report.worst_margin,
        "detail": report.detail,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return payload


def expansion_to_csv(table: ExpansionTable, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps", "v_norm", "ratio"])
        for eps, nrm, ratio in zip(table.eps, table.v_norms, table.ratios):
            writer.writerow([repr(eps), repr(nrm), repr(ratio)])
