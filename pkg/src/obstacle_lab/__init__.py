"""Numerical laboratory for the obstacle problem with variable coefficients.

Solves div(A grad u) = f on the positivity set {u > 0} with an obstacle at
zero, then studies the free boundary: Weiss and Monneau monotonicity
quantities in a matrix-adapted frame, blow-up classification into regular
and singular points, quadratic growth checks, and stratification of the
singular set.
"""

from .errors import (
    AmbiguousProfile,
    BallOutOfDomain,
    ConfigError,
    EllipticityViolation,
    EmptyInterior,
    ForcingBelowC0,
    FrameOverflow,
    GridTooCoarse,
    InfeasibleBoundary,
    InsufficientDecay,
    MaxIterExceeded,
    NoConvergence,
    NoFiniteConstants,
    NonSymmetricError,
    NotSingularPoint,
    ObstacleLabError,
    RadiusOutOfDomain,
    SquareRootFailure,
)
from .geometry import Domain, Grid, box, grid_from_cells
from .field_model import CoefficientField, Frame, make_coefficients, validate_field
from .obstacle_solver import (
    DiscreteEnergy,
    ObstacleSolution,
    ResidualReport,
    assemble,
    pde_residual,
    solve,
)
from .free_boundary import FreeBoundarySet, extract, hausdorff_distance, quadratic_growth_check
from .functionals import (
    HomogeneousProfile,
    MonneauResult,
    MonotonicityTrace,
    WeissDriftResult,
    build_trace,
    derivative_identities_check,
    monneau_test,
    payne_weinberger_check,
    psi,
    theta_constant,
    weiss_drift_test,
    weiss_phi,
)
from .blowup import (
    BlowupReport,
    PointRecord,
    StratificationReport,
    classify_point,
    estimate_decay_rate,
    extract_blowup,
    rescale,
    stratify,
)
from .scenarios import RunOptions, Scenario, get_scenario, parse_config, register_scenario
from .runner import (
    Check,
    ConvergenceTable,
    RunResult,
    list_scenarios,
    refinement_study,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "AmbiguousProfile",
    "BallOutOfDomain",
    "BlowupReport",
    "Check",
    "CoefficientField",
    "ConfigError",
    "ConvergenceTable",
    "DiscreteEnergy",
    "Domain",
    "EllipticityViolation",
    "EmptyInterior",
    "ForcingBelowC0",
    "Frame",
    "FrameOverflow",
    "FreeBoundarySet",
    "Grid",
    "GridTooCoarse",
    "HomogeneousProfile",
    "InfeasibleBoundary",
    "InsufficientDecay",
    "MaxIterExceeded",
    "MonneauResult",
    "MonotonicityTrace",
    "NoConvergence",
    "NoFiniteConstants",
    "NonSymmetricError",
    "NotSingularPoint",
    "ObstacleLabError",
    "ObstacleSolution",
    "PointRecord",
    "RadiusOutOfDomain",
    "ResidualReport",
    "RunOptions",
    "RunResult",
    "Scenario",
    "SquareRootFailure",
    "StratificationReport",
    "WeissDriftResult",
    "assemble",
    "box",
    "build_trace",
    "classify_point",
    "derivative_identities_check",
    "estimate_decay_rate",
    "extract",
    "extract_blowup",
    "get_scenario",
    "grid_from_cells",
    "hausdorff_distance",
    "list_scenarios",
    "make_coefficients",
    "monneau_test",
    "parse_config",
    "payne_weinberger_check",
    "pde_residual",
    "psi",
    "quadratic_growth_check",
    "refinement_study",
    "register_scenario",
    "rescale",
    "run_scenario",
    "solve",
    "stratify",
    "theta_constant",
    "validate_field",
    "weiss_drift_test",
    "weiss_phi",
    "__version__",
]
