"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems -> 2,
numerical divergence -> 3, I/O and parse problems -> 4.
"""


class ConfigurationError(ValueError):
    """Invalid parameters, specs, or solver configuration."""


class DataFormatError(ValueError):
    """Malformed input data (bad CSV row, non-finite value, duplicate time)."""


class DivergenceError(RuntimeError):
    """A numerical iteration produced non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NumericalError(RuntimeError):
    """A linear solve or factorization failed (singular/indefinite system)."""
