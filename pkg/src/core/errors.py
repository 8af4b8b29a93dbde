# src/core/errors.py
from typing import Any, Optional


class ConvexReLUError(Exception):
    """Base class for every error raised by the package"""


class ShapeError(ConvexReLUError, ValueError):
    """Mismatched shapes or non-finite inputs"""


class GeometryError(ShapeError):
    """Patch geometry that does not tile the image"""

    def __init__(self, message: str, expected: Any = None, actual: Any = None):
        super().__init__(f"{message} (expected {expected}, got {actual})")
        self.expected = expected
        self.actual = actual


class ConfigError(ConvexReLUError, ValueError):
    """Invalid configuration"""


class DatasetError(ConvexReLUError, ValueError):
    """Dataset could not be built or parsed"""


class ConvergenceError(ConvexReLUError, RuntimeError):
    """An inner iterative routine hit its iteration cap"""

    def __init__(self, message: str, last_iterate: Any = None, iterations: Optional[int] = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.iterations = iterations


class ArrangementError(ConvergenceError):
    """Feasibility oracle failed on a candidate activation pattern"""

    def __init__(self, message: str, mask: Any = None):
        super().__init__(message, last_iterate=mask)
        self.mask = mask


class CertificateError(ConvexReLUError):
    """A duality bound was requested without a valid certificate"""
