"""Exception hierarchy.

Every error raised by the package derives from :class:`BlowRefineError`.
The CLI maps the three top-level families onto exit codes
(configuration 2, numerical 3, I/O 4).
"""


class BlowRefineError(Exception):
    """Base class."""


class ConfigurationError(BlowRefineError, ValueError):
    """Invalid parameters or configuration keys."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class NumericalError(BlowRefineError, ArithmeticError):
    """A computation produced or would produce unusable numbers."""


class DomainError(NumericalError):
    pass


class BlowUpOverflowError(NumericalError):
    """Non-finite values after an explicit step (threshold too lax)."""


class DegenerateProfileError(NumericalError):
    """The scaled profile never reaches alpha * M."""


class AmbiguousProfileError(NumericalError):
    """The super-level set {scaled u >= alpha M} is not connected."""


class RefinementCollapseError(NumericalError):
    pass


class NoConcentrationError(NumericalError):
    """The refinement interval reaches the physical boundary."""


class SchedulingError(NumericalError):
    """Level clocks out of sync; indicates an engine bug."""


class IntegrationWindowError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class DataError(BlowRefineError, ValueError):
    """Inconsistent input series (non-monotone times, mismatched grids)."""


class InsufficientDataError(DataError):
    pass


class CheckpointError(BlowRefineError, OSError):
    pass
