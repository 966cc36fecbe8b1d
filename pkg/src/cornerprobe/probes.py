"""Complex-geometrical-optics probes u0 = exp(tau (d + i d_perp) . (x - apex))
and the corner-integral / lid-norm estimates they satisfy on truncated corners.

The 2D sector integral has a machine-precision closed form (the angular factor
d.xhat + i d_perp.xhat is a pure phase); everything else is adaptive Gauss
quadrature in polar/spherical coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ProbeOverflowError
from .geometry import ProbeDirection, TruncatedCorner, _orthonormal_complement
from .quadrature import adaptive_gauss, nested_gauss_2d

__all__ = [
    "CgoProbe",
    "evaluate_probe",
    "probe_gradient",
    "corner_integral",
    "corner_integral_constant",
    "weighted_corner_integral",
    "radial_integral",
    "LidNormReport",
    "lid_norm_estimates",
    "SweepFit",
    "TauSweepReport",
    "fit_power_law",
    "fit_exponential_rate",
    "tau_sweep",
]

EXPONENT_CAP = 700.0  # exp(709) overflows float64


@dataclass(frozen=True)
class CgoProbe:
    """A CGO probe attached to a truncated corner."""

    direction: ProbeDirection
    tau: float
    corner: TruncatedCorner

    def __post_init__(self):
        if not self.tau > 0:
            raise GeometryError("tau must be positive")
        d, dp = self.direction.d, self.direction.d_perp
        if d.shape[0] != self.corner.dimension:
            raise GeometryError("probe direction and corner dimension mismatch")
        # (d + i d_perp).(d + i d_perp) = |d|^2 - |d_perp|^2 + 2i d.d_perp = 0
        if abs(d @ d - dp @ dp) > 1e-10 or abs(d @ dp) > 1e-10:
            raise GeometryError("probe is not harmonic: d, d_perp not orthonormal")

    @property
    def rho(self):
        return self.direction.d + 1j * self.direction.d_perp


def evaluate_probe(probe: CgoProbe, points, cap: float = EXPONENT_CAP):
    """u0 at the given points (apex-relative exponent)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float)) - probe.corner.apex
    expo = probe.tau * (pts @ probe.rho)
    worst = float(np.max(expo.real)) if len(expo) else 0.0
    if worst > cap:
        raise ProbeOverflowError(
            f"probe exponent real part {worst:.1f} exceeds cap {cap}"
        )
    vals = np.exp(expo)
    return vals if np.asarray(points).ndim == 2 else vals[0]


def probe_gradient(probe: CgoProbe, points, cap: float = EXPONENT_CAP):
    """grad u0 = tau (d + i d_perp) u0."""
    vals = evaluate_probe(probe, points, cap=cap)
    return probe.tau * np.multiply.outer(np.atleast_1d(vals), probe.rho)


# ---------------------------------------------------------------------------
# Angular factors
# ---------------------------------------------------------------------------

def _sector_phase(probe: CgoProbe):
    """For a 2D sector: g(theta) = (d + i d_perp) . xhat(theta) = e^{i s (theta - phi_d)}.

    Returns (theta_m, theta_M, phi_d, sign) with sign = +1 when d_perp is the
    +90 degree rotation of d, -1 otherwise.
    """
    corner = probe.corner
    if corner.kind != "sector":
        raise GeometryError("sector phase requires a 2D sector corner")
    d, dp = probe.direction.d, probe.direction.d_perp
    phi_d = np.arctan2(d[1], d[0])
    sign = 1.0 if d[0] * dp[1] - d[1] * dp[0] > 0 else -1.0
    theta_m, theta_M = corner.theta_bounds
    return theta_m, theta_M, phi_d, sign


def _check_sector_admissible(probe):
    theta_m, theta_M, phi_d, _ = _sector_phase(probe)
    th = np.linspace(theta_m, theta_M, 721)
    worst = float(np.max(np.cos(th - phi_d)))
    if worst >= 0.0:
        raise GeometryError(
            "probe direction is not admissible for this sector: "
            f"max d.xhat = {worst:.3e} >= 0"
        )
    return theta_m, theta_M, phi_d


def _cone_g(probe: CgoProbe):
    """g(theta, phi) = (d + i d_perp) . xhat for a 3D circular cone frame."""
    axis = probe.corner.axis
    t1, t2 = _orthonormal_complement(axis)
    rho = probe.rho

    def g(theta, phi):
        xhat = (
            np.multiply.outer(np.cos(theta), axis)
            + np.multiply.outer(np.sin(theta) * np.cos(phi), t1)
            + np.multiply.outer(np.sin(theta) * np.sin(phi), t2)
        )
        return xhat @ rho

    return g


# ---------------------------------------------------------------------------
# Radial integrals
# ---------------------------------------------------------------------------

def radial_integral(s, h, power, rtol=1e-12):
    """int_0^h r^power e^{s r} dr for Re s < 0.

    Integer powers use the exact recursion (the truncated Laplace identity);
    non-integer powers fall back to adaptive quadrature. `s` may be an array
    for integer powers.
    """
    s = np.asarray(s, dtype=complex)
    if float(power).is_integer():
        p = int(power)
        val = (np.exp(s * h) - 1.0) / s
        for k in range(1, p + 1):
            val = (h ** k * np.exp(s * h) - k * val) / s
        return val if s.ndim else complex(val)
    if s.ndim:
        return np.array([radial_integral(sv, h, power, rtol) for sv in s])
    return adaptive_gauss(
        lambda r: r ** power * np.exp(s * r), 0.0, h, rtol=rtol
    )


# ---------------------------------------------------------------------------
# Corner integrals
# ---------------------------------------------------------------------------

def corner_integral_constant(corner: TruncatedCorner) -> float:
    """Leading-order constant C in the corner-integral lower bound
    |int u0| >= C tau^{-n} + O(tau^{-1} e^{-zeta h tau / 2}) for an
    axis-opposed probe: 2 theta0 for a sector, sqrt(2) pi (1 - cos theta0)
    for a circular cone (and its circumscribed version for polyhedral ones).
    """
    if corner.kind == "sector":
        return 2.0 * corner.half_angle
    theta = corner.effective_half_angle
    return float(np.sqrt(2.0) * np.pi * (1.0 - np.cos(theta)))

def corner_integral(probe: CgoProbe, method: str = "closed_form", rtol: float = 1e-10):
    """int_{C_h} u0 dx over the truncated corner.

    method="closed_form" (2D sectors only): exact infinite-sector antiderivative
    minus the quadrature-evaluated tail beyond r = h.
    method="quadrature": adaptive polar/spherical quadrature; the 2D variant is
    fully numeric in (r, theta) and independent of the closed form.
    """
    return _corner_integral_weighted(probe, 0.0, method=method, rtol=rtol)


def weighted_corner_integral(probe: CgoProbe, alpha: float, rtol: float = 1e-9):
    """|int_{C_h} |x - apex|^alpha u0 dx| by adaptive quadrature."""
    if not alpha >= 0:
        raise GeometryError("alpha must be nonnegative")
    return abs(_corner_integral_weighted(probe, alpha, method="quadrature", rtol=rtol))


def _corner_integral_weighted(probe, alpha, method, rtol):
    corner, tau = probe.corner, probe.tau
    n = corner.dimension
    if method == "closed_form":
        if corner.kind != "sector":
            raise GeometryError("closed form is available for 2D sectors only")
        if alpha != 0.0:
            raise GeometryError("closed form covers the unweighted integral only")
        theta_m, theta_M, phi_d = _check_sector_admissible(probe)
        _, _, _, sign = _sector_phase(probe)

        def phase(th):
            return np.exp(1j * sign * (th - phi_d))

        # infinite sector: int Gamma(2)/(tau g)^2 dtheta, antiderivative of
        # e^{-2 i s (theta - phi_d)} is e^{-2 i s (.)}/(-2 i s)
        em = np.exp(-2j * sign * (theta_m - phi_d))
        eM = np.exp(-2j * sign * (theta_M - phi_d))
        infinite = (em - eM) / (2j * sign) / tau ** 2

        def tail(th):
            s = tau * phase(th)
            h = corner.radius
            # int_h^inf r e^{s r} dr = e^{s h} (1/s^2 - h/s)
            return np.exp(s * h) * (1.0 / s ** 2 - h / s)

        return infinite - adaptive_gauss(tail, theta_m, theta_M, rtol=rtol)

    if method != "quadrature":
        raise GeometryError(f"unknown corner_integral method {method!r}")

    if corner.kind == "sector":
        theta_m, theta_M, phi_d = _check_sector_admissible(probe)
        _, _, _, sign = _sector_phase(probe)

        def f(th, rs):
            s = tau * np.exp(1j * sign * (th - phi_d))
            return rs ** (1.0 + alpha) * np.exp(s * rs)

        return nested_gauss_2d(
            f, theta_m, theta_M, lambda th: (0.0, corner.radius), rtol=rtol
        )

    if corner.kind == "circular_cone":
        g = _cone_g(probe)
        h = corner.radius
        power = 2.0 + alpha

        def f(phi, thetas):
            s = tau * g(thetas, phi)
            return np.sin(thetas) * radial_integral(s, h, power, rtol=0.01 * rtol)

        return nested_gauss_2d(
            f, 0.0, 2.0 * np.pi, lambda phi: (0.0, corner.half_angle), rtol=rtol
        )

    # polyhedral cone: fan the spherical polygon of edge directions into
    # planar triangles and integrate over the induced solid-angle charts
    edges = np.array(corner.edges)
    t1, t2 = _orthonormal_complement(corner.axis)
    az = np.arctan2(edges @ t2, edges @ t1)
    edges = edges[np.argsort(az)]
    rho, h = probe.rho, corner.radius
    power = float(n - 1) + alpha
    total = 0.0 + 0.0j
    for i in range(1, len(edges) - 1):
        A, B, C = edges[0], edges[i], edges[i + 1]
        det = float(np.linalg.det(np.stack([A, B, C])))

        def f(sv, ts, A=A, B=B, C=C, det=det):
            q = A + sv * (B - A) + np.multiply.outer(ts, C - A)
            qn = np.linalg.norm(q, axis=1)
            s = probe.tau * (q / qn[:, None]) @ rho
            rad = radial_integral(s, h, power, rtol=0.01 * rtol)
            return abs(det) / qn ** 3 * rad

        total += nested_gauss_2d(f, 0.0, 1.0, lambda sv: (0.0, 1.0 - sv), rtol=rtol)
    return total


# ---------------------------------------------------------------------------
# Lid norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LidNormReport:
    tau: float
    l2_u0: float
    h1_u0: float
    flux_l2: float
    bound_h1: float
    bound_flux: float
    lid_measure: float
    zeta: float

    def within_bounds(self, factor: float = 1.0) -> bool:
        return self.h1_u0 <= factor * self.bound_h1 and self.flux_l2 <= factor * self.bound_flux


def lid_norm_estimates(probe: CgoProbe, rtol: float = 1e-10) -> LidNormReport:
    """Quadrature L2/H1 norms of u0 and L2 norm of its normal flux on the
    spherical lid, with the exponential upper bounds they must satisfy.

    |grad u0| = sqrt(2) tau |u0| exactly, so the H1 lid norm is
    (1 + 2 tau^2)^{1/2} times the L2 one.
    """
    corner, tau = probe.corner, probe.tau
    h, zeta = corner.radius, probe.direction.zeta
    d, dp = probe.direction.d, probe.direction.d_perp
    if corner.kind == "sector":
        theta_m, theta_M, phi_d = _check_sector_admissible(probe)

        def u0sq(th):
            return np.exp(2.0 * tau * h * np.cos(th - phi_d)) * h

        def fluxsq(th):
            xhat = np.column_stack([np.cos(th), np.sin(th)])
            amp = (xhat @ d) ** 2 + (xhat @ dp) ** 2
            return tau ** 2 * amp * np.exp(2.0 * tau * h * (xhat @ d)) * h

        l2sq = adaptive_gauss(u0sq, theta_m, theta_M, rtol=rtol).real
        fxsq = adaptive_gauss(fluxsq, theta_m, theta_M, rtol=rtol).real
    elif corner.kind == "circular_cone":
        axis = corner.axis
        t1, t2 = _orthonormal_complement(axis)

        def xhat(thetas, phi):
            return (
                np.multiply.outer(np.cos(thetas), axis)
                + np.multiply.outer(np.sin(thetas) * np.cos(phi), t1)
                + np.multiply.outer(np.sin(thetas) * np.sin(phi), t2)
            )

        def u0sq(phi, thetas):
            xh = xhat(thetas, phi)
            return np.exp(2.0 * tau * h * (xh @ d)) * h ** 2 * np.sin(thetas)

        def fluxsq(phi, thetas):
            xh = xhat(thetas, phi)
            amp = (xh @ d) ** 2 + (xh @ dp) ** 2
            return tau ** 2 * amp * np.exp(2.0 * tau * h * (xh @ d)) * h ** 2 * np.sin(thetas)

        bounds = lambda phi: (0.0, corner.half_angle)
        l2sq = nested_gauss_2d(u0sq, 0.0, 2 * np.pi, bounds, rtol=rtol).real
        fxsq = nested_gauss_2d(fluxsq, 0.0, 2 * np.pi, bounds, rtol=rtol).real
    else:
        raise GeometryError("lid norms support sectors and circular cones")
    l2 = np.sqrt(l2sq)
    decay = np.exp(-zeta * h * tau)
    root_measure = np.sqrt(corner.lid_measure)
    return LidNormReport(
        tau=tau,
        l2_u0=l2,
        h1_u0=float(np.sqrt(1.0 + 2.0 * tau ** 2) * l2),
        flux_l2=float(np.sqrt(fxsq)),
        bound_h1=float(np.sqrt(2.0 * tau ** 2 + 1.0) * decay * root_measure),
        bound_flux=float(np.sqrt(2.0) * tau * decay * root_measure),
        lid_measure=float(corner.lid_measure),
        zeta=float(zeta),
    )


# ---------------------------------------------------------------------------
# Tau sweeps and rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepFit:
    kind: str  # "power": log v ~ slope log tau; "exponential": log v ~ rate tau
    slope: float
    intercept: float
    residual: float
    r_squared: float


def _linear_fit(x, y, kind):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 5:
        raise ValueError("rate fitting needs at least 5 grid points")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ValueError("degenerate fit: zero variance in the sweep data")
    A = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return SweepFit(
        kind=kind,
        slope=float(coef[0]),
        intercept=float(coef[1]),
        residual=float(np.sqrt(np.mean(resid ** 2))),
        r_squared=r2,
    )


def fit_power_law(taus, values):
    """Least-squares slope of log|value| against log tau."""
    return _linear_fit(np.log(taus), np.log(np.abs(values)), "power")


def fit_exponential_rate(taus, values):
    """Least-squares rate of log|value| against tau."""
    return _linear_fit(np.asarray(taus, dtype=float), np.log(np.abs(values)), "exponential")


@dataclass(frozen=True)
class TauSweepReport:
    quantity: str
    taus: tuple
    values: tuple
    bounds: tuple
    fit: SweepFit


_POWER_QUANTITIES = ("corner_integral", "weighted")
_EXP_QUANTITIES = ("lid_u0", "lid_h1", "lid_flux")


def tau_sweep(
    corner: TruncatedCorner,
    direction: ProbeDirection,
    tau_grid,
    quantity: str = "corner_integral",
    alpha: float | None = None,
    method: str = "quadrature",
    rtol: float = 1e-9,
) -> TauSweepReport:
    """Evaluate one corner decay quantity over a tau grid and fit its decay law.

    Power-law quantities are fitted in (log tau, log value); lid norms in
    (tau, log value). The bound column carries the analytic upper bound for
    lid quantities and is NaN otherwise.
    """
    taus = [float(t) for t in tau_grid]
    values, bounds = [], []
    for t in taus:
        probe = CgoProbe(direction=direction, tau=t, corner=corner)
        if quantity == "corner_integral":
            values.append(abs(corner_integral(probe, method=method, rtol=rtol)))
            bounds.append(np.nan)
        elif quantity == "weighted":
            if alpha is None:
                raise ValueError("weighted sweep needs alpha")
            values.append(weighted_corner_integral(probe, alpha, rtol=rtol))
            bounds.append(np.nan)
        elif quantity in _EXP_QUANTITIES:
            rep = lid_norm_estimates(probe, rtol=rtol)
            values.append(
                {"lid_u0": rep.l2_u0, "lid_h1": rep.h1_u0, "lid_flux": rep.flux_l2}[quantity]
            )
            bounds.append({"lid_u0": np.nan, "lid_h1": rep.bound_h1, "lid_flux": rep.bound_flux}[quantity])
        else:
            raise ValueError(f"unknown sweep quantity {quantity!r}")
    if quantity in _POWER_QUANTITIES:
        fit = fit_power_law(taus, values)
    else:
        fit = fit_exponential_rate(taus, values)
    return TauSweepReport(
        quantity=quantity,
        taus=tuple(taus),
        values=tuple(values),
        bounds=tuple(bounds),
        fit=fit,
    )
