"""
Error hierarchy for sonicforge.

Every error carries the CLI exit code it maps to:
0 success, 1 input/data error, 2 unsupported feature.
"""

from typing import Optional


class SonicForgeError(Exception):
    """Base class for all sonicforge errors."""

    exit_code: int = 1


class FormatError(SonicForgeError, ValueError):
    """A file could not be parsed (mesh, WAV, JSON)."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ):
        self.path = path
        self.line = line
        self.offset = offset
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class ValidationError(SonicForgeError, ValueError):
    """Input values violate a documented invariant."""


class ConfigurationError(SonicForgeError, ValueError):
    """Configuration is incomplete or inconsistent."""


class PlacementError(SonicForgeError, ValueError):
    """A source/receiver placement is invalid or could not be sampled."""

    def __init__(self, message: str, constraint: str = ""):
        self.constraint = constraint
        super().__init__(message)


class UnreachableError(SonicForgeError):
    """No navigable path joins two points."""


class DomainError(SonicForgeError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DurationError(SonicForgeError, ValueError):
    """Signal too short for the requested measurement."""


class CannotNormalizeError(SonicForgeError, ValueError):
    """Loudness normalization requested on a silent signal."""


class DataError(SonicForgeError):
    """Input data pools or manifests cannot satisfy the request."""


class SizeError(SonicForgeError, ValueError):
    """Problem size exceeds a guarded limit."""


class UnsupportedError(SonicForgeError):
    """Feature intentionally not supported."""

    exit_code = 2
