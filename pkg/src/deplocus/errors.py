"""Exception types shared across the package."""


class DeplocusError(Exception):
    """Base class for all package-specific errors."""


class ExprSyntaxError(DeplocusError):
    """Malformed expression text.  `position` is a 0-based character offset."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier that is neither a variable nor a known function."""


class EvaluationError(DeplocusError):
    """Numeric evaluation failed (division by zero)."""


class ChartExitError(DeplocusError):
    """Integration left the chart box."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class NotOnLocusError(DeplocusError):
    """Operation requires a point on the dependence locus."""


class RegularityError(DeplocusError):
    """Gradient of the dependence function too small to define the locus."""


class DegenerateRankError(DeplocusError):
    """Frame rank dropped below 2 where a 2-plane field was required."""


class TangencyError(DeplocusError):
    """Plane field tangent (or too close to tangent) to the locus."""


class StepFailureError(DeplocusError):
    """Characteristic integrator lost orientation tracking."""


class GridMismatchError(DeplocusError):
    """Sampled inputs do not share the expected time grid."""


class ControlSolveError(DeplocusError):
    """No singular control reproduces the requested velocity."""


class ConfigError(DeplocusError):
    """Malformed run configuration.  Carries a 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
