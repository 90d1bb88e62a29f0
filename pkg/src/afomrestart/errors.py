"""Exception hierarchy shared by all modules.

Every error carries an ``exit_status`` used by the command-line front end.
"""


class AfomError(Exception):
    """Base class for errors raised by this package."""

    exit_status = 1


class InputError(AfomError, ValueError):
    """Malformed or out-of-domain input (dimension mismatch, point outside dom f, ...)."""


class ConfigurationError(AfomError, ValueError):
    """Invalid solver or generator configuration."""


class DegenerateInputError(AfomError, ValueError):
    """Input is well formed but degenerate (empty sample set, no constraints, ...)."""


class UnsupportedQueryError(AfomError):
    """Query needs information that is not available (missing certificate or projection)."""


class PreconditionError(AfomError, ValueError):
    """A bound was requested outside the range where it is meaningful."""


class CapExceededError(AfomError):
    """The iteration safety cap was hit before the exit condition.

    ``partial`` holds whatever partial run or trace was recorded.
    """

    exit_status = 2

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
