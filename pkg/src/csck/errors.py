"""Exception hierarchy.

Validation errors (bad input) and numerical failures are separated so the
command line can map them to distinct exit codes.
"""


class CsckError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CsckError):
    """Input data violates a precondition."""


class NumericalError(CsckError):
    """A computation failed to produce a trustworthy number."""


class Unbounded(ValidationError):
    pass


class EmptyInterior(ValidationError):
    pass


class NotDelzant(ValidationError):
    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class NonPrimitiveNormal(ValidationError):
    pass


class NonLatticePolytope(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class DegenerateConfiguration(ValidationError):
    pass


class NonPositiveMetric(ValidationError):
    pass


class BadConfig(ValidationError):
    pass


class UnknownCommand(ValidationError):
    pass


class SingularHessian(NumericalError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class QuadratureOverflow(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepCollapse(NumericalError):
    pass


class NoDecayDetected(NumericalError):
    pass
