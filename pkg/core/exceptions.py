#!/usr/bin/env python3
"""
ConeWalk - Error Taxonomy
Exceptions raised by the geometry, step, walk and verification layers.

Features:
- Single ConeWalkError root so the CLI can map any library failure to exit code 3
- Argument-style errors double as ValueError for callers that only know the builtins
- ConfigError carries the offending field and source line
"""
from typing import Optional


class ConeWalkError(Exception):
    """Base class for every error raised by conewalk"""


class ArgumentError(ConeWalkError, ValueError):
    """Malformed argument (shape, range, empty input)"""


class DimensionMismatchError(ArgumentError):
    """Point or matrix dimension does not match the cone or law"""


class UnsupportedConeError(ConeWalkError, ValueError):
    """Region has no supported representation for the requested query"""


class UnsupportedSpectralError(ConeWalkError, ValueError):
    """No closed-form spectral data for this cone"""


class UnsupportedDistributionError(ConeWalkError, ValueError):
    """Operation needs a finite-support step law"""


class PreconditionError(ConeWalkError, ValueError):
    """Operation called outside its domain (start point outside region, stencil too wide)"""


class DegeneracyError(ConeWalkError, ValueError):
    """Covariance is singular so the law cannot be whitened"""


class AperiodicityError(ConeWalkError):
    """Local verifiers refuse periodic lattice laws"""

    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigError(ConeWalkError, ValueError):
    """Experiment config violates the schema"""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.message = message
        self.field = field
        self.line = line
        location = []
        if field:
            location.append(f"field '{field}'")
        if line is not None:
            location.append(f"line {line}")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
