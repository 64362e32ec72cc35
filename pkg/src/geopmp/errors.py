"""Exception types shared across the package."""


class GeoPMPError(Exception):
    """Base class for all package-specific errors."""


class MembershipError(GeoPMPError):
    """A point (or vector) fails a manifold membership/tangency test."""


class JacobianError(GeoPMPError):
    """A required Jacobian is unavailable or fails validation."""


class DynamicsLeftManifold(GeoPMPError):
    """A dynamics step produced a state off the manifold beyond tolerance."""


class NotInSetError(GeoPMPError):
    """A control point is not in the admissible set within tolerance."""


class InfeasiblePointError(GeoPMPError):
    """A state violates an inequality constraint where feasibility is required."""


class InfeasibleError(GeoPMPError):
    """A solve found no feasible candidate."""


class NonConvergence(GeoPMPError):
    """An iterative solve stopped without meeting its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SingularStationarity(GeoPMPError):
    """The inner stationarity system in shooting is singular."""


class TentUnavailable(GeoPMPError):
    """No constructive tent exists for this control set at this point."""


class ParseError(GeoPMPError):
    """A problem document failed validation.

    ``location`` is a JSON-pointer-style path into the offending document.
    """

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location
