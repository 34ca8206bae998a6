class LabError(Exception):
    """Base class for every error raised by the lab."""


class DimensionError(LabError, ValueError):
    """Coordinate lengths or truncation levels do not fit together."""


class DomainError(LabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(LabError, ValueError):
    """A preset, key or schedule in an experiment configuration is invalid."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class NumericalAbort(LabError, RuntimeError):
    """A numerical scheme left its stability region."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = dict(diagnostic or {})
