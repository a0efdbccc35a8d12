"""Exception types shared across the package."""


class OrliczLabError(Exception):
    """Base class for all package errors."""


class DomainError(OrliczLabError, ValueError):
    pass


class ExtrapolationError(OrliczLabError, ValueError):
    pass


class DegenerateFunctionError(OrliczLabError, ValueError):
    """phi vanishes at a positive argument, so growth ratios are undefined."""


class ParameterError(OrliczLabError, ValueError):
    pass


class GridTooCoarseError(OrliczLabError, ValueError):
    pass


class PreconditionError(OrliczLabError, ValueError):
    pass


class CoverageError(OrliczLabError, ValueError):
    pass


class DegenerateInputError(OrliczLabError, ValueError):
    pass


class SolverFailure(OrliczLabError, RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual
