"""Exception hierarchy shared by all modules."""


class WeakPointerError(Exception):
    """Base class for every error raised by this package."""


class CircuitError(WeakPointerError, ValueError):
    """Malformed or invalid circuit description."""


class NonUnitaryCouplerError(CircuitError):
    pass


class DanglingPathError(CircuitError):
    pass


class DuplicatePathError(CircuitError):
    pass


class UnknownPortError(CircuitError):
    pass


class PathNotAtStageError(CircuitError):
    pass


class PostselectionError(WeakPointerError, ArithmeticError):
    """The post-selection overlap or probability vanishes."""


class GridResolutionError(WeakPointerError, ValueError):
    pass


class SamplingError(WeakPointerError, RuntimeError):
    pass


class ScenarioAssertionError(WeakPointerError, AssertionError):
    """A scenario's own check failed; ``row`` is the offending row."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class OracleDisagreementError(WeakPointerError, AssertionError):
    def __init__(self, message, discrepancy):
        super().__init__(message)
        self.discrepancy = discrepancy
