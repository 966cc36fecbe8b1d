"""Corner-probe identification of anomalous semilinear inclusions.

Numerical toolkit for probing convex corners of unknown inclusions with
complex-geometrical-optics solutions: corner integral estimates, finite
element forward solves of semilinear diffusion, apex value extraction,
and shape/coefficient recovery from boundary Cauchy data.
"""

from .errors import (
    ConfigError,
    CornerProbeError,
    ExtractionError,
    GeometryError,
    MeshError,
    ProbeOverflowError,
    QuadratureError,
    RecoveryError,
    SolverError,
)

__version__ = "1.0.0"

__all__ = [
    "CornerProbeError",
    "GeometryError",
    "MeshError",
    "QuadratureError",
    "ProbeOverflowError",
    "SolverError",
    "ExtractionError",
    "RecoveryError",
    "ConfigError",
    "__version__",
]
