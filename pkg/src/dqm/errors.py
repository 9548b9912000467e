"""Exception types raised by the library."""


class DQMError(Exception):
    """Base class for all library errors."""


class ParameterError(DQMError, ValueError):
    pass


class DomainError(DQMError, ValueError):
    pass


class ConvergenceError(DQMError, ArithmeticError):
    pass


class DegeneracyError(DQMError, ArithmeticError):
    pass


class SamplingError(DQMError, ArithmeticError):
    pass


class LadderError(DQMError, ArithmeticError):
    pass


class HermiticityError(DQMError, ValueError):
    pass


class SolverError(DQMError, ArithmeticError):
    pass


class ValidityError(DQMError, ValueError):
    """Invalid deletion set. ``m`` is the first index violating the sign rule."""

    def __init__(self, message, m=None):
        super().__init__(message)
        self.m = m


class SingularityError(DQMError, ArithmeticError):
    pass


class NonPolynomialError(DQMError, ArithmeticError):
    pass


class ConstraintError(DQMError, ValueError):
    pass


class CoordinateDegeneracyError(DQMError, ArithmeticError):
    pass


class ConstructionError(DQMError, ArithmeticError):
    pass


class DeformationSingularityError(DQMError, ArithmeticError):
    pass


class QuadratureError(DQMError, ArithmeticError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
