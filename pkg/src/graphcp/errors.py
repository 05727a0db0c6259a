"""Shared exception types."""


class ValidationError(ValueError):
    """Raised when inputs violate a documented contract (bad file, bad
    parameter, inconsistent shapes).  The CLI maps this to exit code 1;
    anything else is a runtime error (exit code 2)."""
