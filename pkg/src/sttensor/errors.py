"""Shared exception types.

``FormatError`` carries a short machine-readable ``code`` so callers (and the
command line wrapper) can distinguish failure classes without parsing
messages. ``NumericError`` marks failures inside iterative numerics, e.g. a
non-finite value appearing mid-sweep.
"""


class ToolkitError(Exception):
    """Base class for errors raised by this package."""


class FormatError(ToolkitError):
    """Malformed or inconsistent input data.

    Codes used by the binary loader: ``bad-magic``, ``bad-version``,
    ``dim-overflow``, ``truncated``, ``length-mismatch``, ``bad-checksum``,
    ``non-finite``. The CSV loader adds ``bad-header``, ``parse-error``,
    ``unknown-variable``, ``unknown-date``, ``bad-cell-id``,
    ``duplicate-entry`` and ``missing-entry``.
    """

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class NumericError(ToolkitError):
    """Numerical failure during an iterative computation."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
