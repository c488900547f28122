#!/usr/bin/env python3
"""
Toolkit Exceptions
==================
Every error raised on purpose by the toolkit derives from
HybridBeamformingError so the CLI can report it as a one-line diagnostic.
"""

from typing import Optional


class HybridBeamformingError(ValueError):
    """Base class for all toolkit errors"""


class DimensionError(HybridBeamformingError):
    """Matrix or vector shapes do not fit together"""


class SingularMatrixError(HybridBeamformingError):
    """A Gram, covariance or MMSE matrix could not be inverted"""


class NonHermitianError(HybridBeamformingError):
    """A matrix expected to be Hermitian is not"""


class DesignError(HybridBeamformingError):
    """A design algorithm cannot run for the given inputs"""


class DatasetFormatError(HybridBeamformingError):
    """Channel dataset file is truncated, corrupt or of another version"""


class ConfigError(HybridBeamformingError):
    """Sweep configuration is malformed or violates a constraint"""

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class SweepAbortedError(HybridBeamformingError):
    """Too many trials failed for a sweep to be trusted"""
