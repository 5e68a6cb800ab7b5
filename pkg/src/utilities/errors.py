"""
File: errors.py
Description: Exception hierarchy shared by the library and the CLI. Every
error carries a stable machine-readable code.
"""

from typing import Dict, Optional


class SaddletailError(Exception):
    """Base class for all saddletail errors"""

    code = "ERROR"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, str]:
        """
        Serializable form written to the CLI's diagnostic stream.
        :return: Dictionary with the error code and message.
        """
        return {"error": self.code, "message": self.message}

    def __str__(self):
        return f"{self.code}: {self.message}"


class InvalidDistributionError(SaddletailError):
    code = "INVALID_DISTRIBUTION"


class OutOfStripError(SaddletailError):
    code = "OUT_OF_STRIP"


class TargetOutOfRangeError(SaddletailError):
    code = "TARGET_OUT_OF_RANGE"


class NoConvergenceError(SaddletailError):
    code = "NO_CONVERGENCE"


class DegenerateError(SaddletailError):
    code = "DEGENERATE"


class XTooSmallError(SaddletailError):
    code = "X_TOO_SMALL"


class UnsupportedError(SaddletailError):
    code = "UNSUPPORTED"


class TooLargeError(SaddletailError):
    code = "TOO_LARGE"


class EmptyResultError(SaddletailError):
    code = "EMPTY_RESULT"


class SchemaMismatchError(SaddletailError):
    code = "SCHEMA_MISMATCH"


class ConfigError(SaddletailError):
    """Invalid run configuration; `field` is the dotted path at fault"""

    code = "CONFIG_INVALID"

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def to_dict(self) -> Dict[str, str]:
        payload = super().to_dict()
        if self.field:
            payload["field"] = self.field
        return payload

    def __str__(self):
        where = f" (at {self.field})" if self.field else ""
        return f"{self.code}: {self.message}{where}"


class ReportIOError(SaddletailError):
    code = "IO_ERROR"

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} [{path}]")
        self.path = path
