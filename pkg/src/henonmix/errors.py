"""Exception hierarchy shared by all modules."""


class HenonError(Exception):
    """Base class for every error raised by henonmix."""


class MapFileError(HenonError, ValueError):
    """Malformed map description; ``location`` names the line or field."""

    def __init__(self, message, location=None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class EscapedToInfinity(HenonError, ArithmeticError):
    """Floating overflow while evaluating a factor."""

    def __init__(self, factor_index, direction="forward"):
        self.factor_index = factor_index
        self.direction = direction
        super().__init__(f"escaped-to-infinity in {direction} factor {factor_index}")


class RegularityError(HenonError):
    """The homogeneous parts share a nonzero common zero."""

    def __init__(self, message, common_zero=None, report=None):
        self.common_zero = common_zero
        self.report = report
        super().__init__(message if common_zero is None else f"{message}; common zero {common_zero}")


class GreenInputError(HenonError, ValueError):
    pass


class BoundaryLayerError(HenonError, IndexError):
    pass


class GridMismatchError(HenonError, ValueError):
    pass


class ZeroMassError(HenonError, ZeroDivisionError):
    pass


class SamplerError(HenonError):
    pass


class NoSeedsError(SamplerError, ValueError):
    pass


class NewtonFailure(SamplerError):
    def __init__(self, message, residual=None, code=None):
        self.residual = residual
        self.code = code
        super().__init__(message)


class CodeMismatch(NewtonFailure):
    pass


class IncompleteEnsemble(SamplerError):
    pass


class InsufficientSignal(HenonError, ValueError):
    pass


class AcceptanceFailure(HenonError):
    pass
