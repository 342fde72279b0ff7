"""Exception types shared across the package."""

from __future__ import annotations


class DataError(ValueError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class FormatError(DataError):
    """A line of a delimited input file could not be parsed."""

    def __init__(self, path, lineno: int, message: str):
        self.path = str(path)
        self.lineno = lineno
        super().__init__(f"{self.path}:{lineno}: {message}")


class IndexFileError(DataError):
    """The on-disk index is truncated, corrupt, or of an unknown version."""
