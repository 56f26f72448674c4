"""Exception types shared across the package."""


class StofhnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StofhnError):
    """Invalid or inconsistent problem/experiment setup."""


class NumericError(StofhnError):
    """A numerical procedure failed to converge or produced unusable values.

    Carries optional diagnostics (last residual, iteration count, ...) in
    ``details``.
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = dict(details)


class VerificationFailure(StofhnError):
    """One or more verification criteria did not pass."""
