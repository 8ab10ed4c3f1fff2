"""Exception and warning types shared across the package."""


class ObstacleLabError(Exception):
    """Base class for all package errors."""


class NonSymmetricError(ObstacleLabError):
    """Coefficient matrix A(x) is not symmetric at some sample point."""


class EllipticityViolation(ObstacleLabError):
    """Eigenvalues of A(x) leave the declared [1/lambda, lambda] range."""


class ForcingBelowC0(ObstacleLabError):
    """Forcing f dips below the declared positive lower bound c0."""


class SquareRootFailure(ObstacleLabError):
    """A(x0) has an eigenvalue at or below the positivity tolerance."""


class GridTooCoarse(ObstacleLabError):
    """Grid cannot resolve the requested stencil or radius ladder."""


class InfeasibleBoundary(ObstacleLabError):
    """Boundary data g takes negative values; the constraint set is empty."""


class MaxIterExceeded(ObstacleLabError):
    """Solver hit the iteration cap before reaching tolerance."""


class EmptyInterior(ObstacleLabError):
    """Solution has no interior nodes to classify."""


class RadiusOutOfDomain(ObstacleLabError):
    """Requested ball or sphere pokes outside the computational domain."""


class BallOutOfDomain(RadiusOutOfDomain):
    """Alias used by the energy quadratures."""


class NoFiniteConstants(ObstacleLabError):
    """Drift fit found no admissible constants below the search cap."""


class NotSingularPoint(ObstacleLabError):
    """Monneau test invoked at a point without a singular (type B) profile."""


class NoConvergence(ObstacleLabError):
    """Rescaled fields are not settling toward a blow-up profile."""


class AmbiguousProfile(ObstacleLabError):
    """Half-space and polynomial fits are too close to call."""


class FrameOverflow(ObstacleLabError):
    """Frame-mapped ball exceeds the domain; radius too large."""


class InsufficientDecay(ObstacleLabError):
    """Regular point shows no positive decay rate toward its profile."""


class ConfigError(ObstacleLabError):
    """Scenario configuration is malformed; message names the failing key."""


class OriginEvaluationWarning(UserWarning):
    """mu was evaluated at the base point; the normalized value 1 is used."""
