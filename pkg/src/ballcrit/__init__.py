"""Solve and certify multiple critical points of lattice energies
J(u) = 1/2 u^T A u - lambda * sum F((i,j), u(i,j)) on closed balls."""

from .dc import (
    CertificateReport,
    LambdaStarResult,
    StructureConstants,
    beta_sup,
    certify,
    discrete_constants,
    h3_check,
    lambda_star,
)
from .grid import (
    GridProblem,
    GridShape,
    GridVector,
    Nonlinearity,
    OperatorA,
    assemble_dense,
    eigen_analytic,
    make_nonlinearity,
)
from .solvers import (
    CriticalPoint,
    GeometryViolationError,
    MountainGeometryReport,
    NotAntiCoerciveError,
    PipelineResult,
    SolverOptions,
    ball_minimize,
    global_maximize,
    mountain_geometry_check,
    mountain_pass,
    newton_enumerate,
    three_point_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "GridShape",
    "GridVector",
    "OperatorA",
    "Nonlinearity",
    "GridProblem",
    "assemble_dense",
    "eigen_analytic",
    "make_nonlinearity",
    "StructureConstants",
    "LambdaStarResult",
    "CertificateReport",
    "discrete_constants",
    "lambda_star",
    "beta_sup",
    "certify",
    "h3_check",
    "SolverOptions",
    "CriticalPoint",
    "MountainGeometryReport",
    "PipelineResult",
    "GeometryViolationError",
    "NotAntiCoerciveError",
    "ball_minimize",
    "mountain_pass",
    "global_maximize",
    "mountain_geometry_check",
    "newton_enumerate",
    "three_point_pipeline",
]
