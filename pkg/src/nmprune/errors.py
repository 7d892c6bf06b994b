"""Exception types shared across the toolkit.

FormatError covers malformed on-disk inputs (bad magic, truncation, broken
JSON). ValidationError covers violated invariants on otherwise well-formed
data (shape mismatches, non-finite values, bad parameter ranges). The CLI
maps both to exit code 2 (usage/validation); anything else is an internal
failure (exit code 1).
"""


class ToolkitError(Exception):
    pass


class FormatError(ToolkitError):
    """A file or byte stream does not conform to its documented layout."""


class ValidationError(ToolkitError):
    """Well-formed data violates a documented invariant."""
