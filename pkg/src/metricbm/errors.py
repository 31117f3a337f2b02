"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (CLI exit code 2),
numerical failures from :class:`NumericalError` (exit code 3).
"""


class MetricBMError(Exception):
    """Base class for all package errors."""

    code = "error"


class ValidationError(MetricBMError, ValueError):
    code = "validation"


class NonpositiveLength(ValidationError):
    code = "NonpositiveLength"


class DanglingEndpoint(ValidationError):
    code = "DanglingEndpoint"


class UnsupportedLoop(ValidationError):
    code = "UnsupportedLoop"


class DuplicateId(ValidationError):
    code = "DuplicateId"


class IsolatedVertex(ValidationError):
    code = "IsolatedVertex"


class NormalizationViolation(ValidationError):
    code = "NormalizationViolation"


class DirichletExcluded(ValidationError):
    code = "DirichletExcluded"


class NegativeCoefficient(ValidationError):
    code = "NegativeCoefficient"


class KeyMismatch(ValidationError):
    code = "KeyMismatch"


class ParseError(ValidationError):
    code = "ParseError"


class ShellTooLarge(ValidationError):
    code = "ShellTooLarge"


class NotVanishingAtInfinity(ValidationError):
    code = "NotVanishingAtInfinity"


class NumericalError(MetricBMError, ArithmeticError):
    code = "numerical"


class SingularSecularMatrix(NumericalError):
    code = "SingularSecularMatrix"

    def __init__(self, message, kappa=None):
        super().__init__(message)
        self.kappa = kappa


class ResidualTooLarge(NumericalError):
    code = "ResidualTooLarge"


class SeriesNotConverged(NumericalError):
    code = "SeriesNotConverged"


class ScanInconclusive(NumericalError):
    code = "ScanInconclusive"
