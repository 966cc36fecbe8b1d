"""Exception types shared across the package."""


class CornerProbeError(Exception):
    """Base class for all package errors."""


class GeometryError(CornerProbeError):
    """Invalid or degenerate geometric configuration."""


class MeshError(CornerProbeError):
    """Mesh generation or validity failure."""


class QuadratureError(CornerProbeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class ProbeOverflowError(CornerProbeError):
    """CGO probe exponent exceeds the floating-point overflow cap."""


class SolverError(CornerProbeError):
    """Forward solver failure (non-convergence, singular system, bad data)."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history) if residual_history else []


class ExtractionError(CornerProbeError):
    """Apex-extraction hypothesis violated (e.g. flank Cauchy mismatch)."""


class RecoveryError(CornerProbeError):
    """Inverse recovery failure (stagnation, singular system, bad inputs)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(CornerProbeError):
    """Malformed or inconsistent experiment configuration."""
