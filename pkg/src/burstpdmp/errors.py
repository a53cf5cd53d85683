"""Exception hierarchy shared by the library and the command line."""


class BurstPDMPError(Exception):
    """Base class for every error raised by burstpdmp."""

    exit_code = 1


class DomainError(BurstPDMPError, ValueError):
    """An argument lies outside the domain of the operation."""

    exit_code = 2


class ConfigError(BurstPDMPError, ValueError):
    """Invalid experiment or model configuration.

    ``field`` carries the dotted path of the offending entry when known.
    """

    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NumericalError(BurstPDMPError, ArithmeticError):
    """A numerical routine failed (non-convergence, mass drift, step underflow)."""

    exit_code = 3


class SafetyCapError(NumericalError):
    """Thinning exceeded its proposal budget without accepting a jump."""


class UnsupportedError(BurstPDMPError, NotImplementedError):
    """The requested combination of model ingredients has no supported method."""

    exit_code = 2


class CheckFailure(BurstPDMPError):
    """A self-check or acceptance check did not pass."""

    exit_code = 4
