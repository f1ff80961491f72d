"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations

from typing import Optional


class DriveProfileError(Exception):
    """Base class for every error raised by driveprofile."""

    exit_code = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ConfigError(DriveProfileError):
    """Invalid run configuration (file or overrides)."""

    exit_code = 2


class DataError(DriveProfileError):
    """Input data that cannot be used."""

    exit_code = 3


class ParseError(DataError):
    """Malformed delimited text; ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(DataError):
    """Well-formed input that violates a domain invariant."""

    def __init__(self, message: str, index: Optional[int] = None) -> None:
        super().__init__(message)
        self.index = index


class ModelError(DriveProfileError):
    """Dimension mismatch, invalid sizes or a corrupt checkpoint."""

    exit_code = 4


class OptimizationError(DriveProfileError):
    """Non-finite gradients or parameters during an update."""

    exit_code = 4

    def __init__(self, message: str, tensor: Optional[str] = None) -> None:
        super().__init__(message)
        self.tensor = tensor
