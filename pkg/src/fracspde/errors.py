"""Exception hierarchy.

Every error carries a ``category`` string that the command line maps to an
exit status and echoes in its machine-readable error line.
"""

from __future__ import annotations


class FracSPDEError(Exception):
    category = "internal"


class ConfigParseError(FracSPDEError):
    category = "config-parse"


class ValidationError(FracSPDEError, ValueError):
    category = "validation"


class NumericalError(FracSPDEError, ArithmeticError):
    category = "numeric"


class PoleError(NumericalError):
    """Gamma evaluated at a non-positive integer."""


class NonConvergenceError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class UnsupportedPathError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class CacheMissError(NumericalError):
    pass
