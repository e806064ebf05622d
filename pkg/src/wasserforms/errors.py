"""Exception hierarchy.

Validation problems derive from :class:`ValidationError`, numerical breakdowns
from :class:`NumericalError`; the CLI maps them to exit codes 2 and 3.
"""


class WasserformsError(Exception):
    """Base class for all package errors."""

    code = "error"


class ValidationError(WasserformsError, ValueError):
    code = "validation"


class NumericalError(WasserformsError, ArithmeticError):
    code = "numerical"


class NonpositiveWeight(ValidationError):
    code = "NonpositiveWeight"


class LengthMismatch(ValidationError):
    code = "LengthMismatch"


class WeightSumOutOfRange(ValidationError):
    code = "WeightSumOutOfRange"


class DimensionMismatch(ValidationError):
    code = "DimensionMismatch"


class CoincidentAtoms(ValidationError):
    code = "CoincidentAtoms"


class OutOfRange(ValidationError):
    code = "OutOfRange"


class NonMonotone(ValidationError):
    code = "NonMonotone"


class MissingVelocities(ValidationError):
    code = "MissingVelocities"


class JacobianUnavailable(ValidationError):
    code = "JacobianUnavailable"


class BadRadius(ValidationError):
    code = "BadRadius"


class NotClosedCurve(ValidationError):
    code = "NotClosedCurve"


class NotClosedForm(NumericalError):
    code = "NotClosedForm"


class OddDimension(ValidationError):
    code = "OddDimension"


class AtomCollision(NumericalError):
    code = "AtomCollision"

    def __init__(self, t, message=None):
        self.t = float(t)
        super().__init__(message or f"atoms collided at t={self.t:.17g}")


class StepRejected(NumericalError):
    code = "StepRejected"
