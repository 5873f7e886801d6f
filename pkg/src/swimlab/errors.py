"""Exception taxonomy shared across the package.

Every failure mode that callers are expected to distinguish gets its own
class; anything else surfaces as a plain ValueError from the offending
call site.
"""


class SwimLabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SwimLabError):
    """A scenario file could not be parsed or fails schema validation.

    Carries the offending key (dotted path) and, when known, the line
    number in the source file.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        parts = [message]
        if key is not None:
            parts.append(f"key={key!r}")
        if line is not None:
            parts.append(f"line={line}")
        super().__init__("; ".join(parts))


class ShapeOutsideDomain(SwimLabError):
    """A body part's closure touches or crosses the domain boundary."""


class OverlapViolation(SwimLabError):
    """Two body parts are closer than twice the circumscribed radius."""


class BoundaryViolation(SwimLabError):
    """A body part is too close to a wall for the configuration to be valid."""


class DegenerateShift(SwimLabError):
    """A requested thickness shift is too small to resolve."""


class DegenerateGeometry(SwimLabError):
    """Rotational force geometry is degenerate (zero-length arm or aligned triple in 3-D where a direction is required)."""


class PoissonDivergence(SwimLabError):
    """The pressure solver failed to reach its residual target."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class CflViolation(SwimLabError):
    """A requested time step exceeds the stability bound."""


class NanDetected(SwimLabError):
    """A field picked up NaN/Inf values during time stepping."""


class GridMismatch(SwimLabError):
    """Two objects that must share a grid or time axis do not."""


class MissingBaselineData(SwimLabError):
    """A baseline trajectory lacks stored velocity snapshots."""


class MissingSensitivity(SwimLabError):
    """A sensitivity field required for this computation was not supplied."""


class SeparationViolated(SwimLabError):
    """A probe region is closer to the source body than the declared separation."""


class NoConvergence(SwimLabError):
    """An iterative outer loop (steering, solver calibration) did not converge.

    `best_residual` records the smallest residual seen; `history` the
    per-iteration residuals.
    """

    def __init__(self, message, best_residual=None, history=None):
        self.best_residual = best_residual
        self.history = list(history) if history is not None else []
        super().__init__(message)


class SingularJacobian(SwimLabError):
    """The steering Jacobian is numerically singular."""
