"""Exception hierarchy for the plap package."""

from __future__ import annotations


class PlapError(Exception):
    """Base class for all package errors."""


class ConfigError(PlapError, ValueError):
    """Invalid or inconsistent run configuration."""


class NonPositiveLength(ConfigError):
    pass


class MixedRequiresOneAxial(ConfigError):
    pass


class EllipticityViolation(PlapError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class ZeroA11(PlapError):
    pass


class ZeroDenominator(PlapError, ZeroDivisionError):
    pass


class EmptyInterior(PlapError):
    pass


class NotConverged(PlapError):
    """Raised by strict solves; ``result`` holds the best iterate."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class NonpositiveV(PlapError, ValueError):
    pass


class CollarTooWide(PlapError, ValueError):
    pass


class GeometryError(PlapError, ValueError):
    pass


class InsufficientData(PlapError):
    pass


class NonPositiveGap(PlapError):
    pass
