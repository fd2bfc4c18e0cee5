"""lyapcert: convergence certification for systems whose candidate Lyapunov
function may fail its decay condition on a small bad set."""

from .bounds import DomainConstants, estimate_constants
from .badset import analyze_badset, classify_point
from .certificate import (
    Certificate,
    CertificateError,
    GuasReport,
    RateFunctions,
    ball_volume,
    certify,
    certify_guas,
)
from .grids import GridSpec, default_grid
from .systems import (
    AnnularRegion,
    CandidateFunction,
    VectorFieldSpec,
    builtin_system,
    candidate_from_expression,
    field_from_expressions,
    quadratic_candidate,
)
from .trajectory import IntegratorConfig, TrajectoryRecord, integrate, verify_certificate

__version__ = "0.1.0"

__all__ = [
    "AnnularRegion",
    "Certificate",
    "CertificateError",
    "CandidateFunction",
    "DomainConstants",
    "GridSpec",
    "GuasReport",
    "IntegratorConfig",
    "RateFunctions",
    "TrajectoryRecord",
    "VectorFieldSpec",
    "analyze_badset",
    "ball_volume",
    "builtin_system",
    "candidate_from_expression",
    "certify",
    "certify_guas",
    "classify_point",
    "default_grid",
    "estimate_constants",
    "field_from_expressions",
    "integrate",
    "quadratic_candidate",
    "verify_certificate",
]
