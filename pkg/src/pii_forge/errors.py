"""Shared exception types."""


class DataError(Exception):
    """Malformed or inconsistent input data. CLI maps this to exit code 2."""


class UsageError(Exception):
    """Bad command-line usage. CLI maps this to exit code 1."""
