"""Shared exception types."""


class DataError(Exception):
    """Malformed or inconsistent dataset files / records."""


class GuardError(Exception):
    """Numerical precondition or size-guard violation."""
