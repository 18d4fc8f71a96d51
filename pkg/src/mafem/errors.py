"""Exception hierarchy shared by the solver modules."""


class MAFEMError(Exception):
    """Base class for all errors raised by this package."""


class InvalidMeshError(MAFEMError):
    pass


class MeshParseError(InvalidMeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RefinementError(MAFEMError):
    """Bisection closure did not terminate; refinement-edge data is corrupt."""


class UnsupportedDegreeError(MAFEMError, ValueError):
    pass


class DataError(MAFEMError, ValueError):
    """A data callable returned a non-finite value."""


class ProblemDataError(MAFEMError, ValueError):
    """Problem data violates a standing assumption (e.g. f <= 0)."""


class ParameterError(MAFEMError, ValueError):
    pass


class CapabilityError(MAFEMError):
    """The requested quantity needs an exact solution the problem lacks."""


class UndefinedEffectivityError(MAFEMError, ArithmeticError):
    """The true error is zero so the effectivity index has no value."""


class SingularMatrixError(MAFEMError, ArithmeticError):
    pass


class DivergedError(MAFEMError):
    def __init__(self, message, iteration=None, history=None):
        self.iteration = iteration
        self.history = list(history or [])
        super().__init__(message)


class NotConvergedError(MAFEMError):
    def __init__(self, message, history=None):
        self.history = list(history or [])
        super().__init__(message)


class ConfigError(MAFEMError, ValueError):
    pass
