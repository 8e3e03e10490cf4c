"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class PolyaForestError(Exception):
    exit_code = 3


class UsageError(PolyaForestError, ValueError):
    exit_code = 1


class DomainError(PolyaForestError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 1


class UnsupportedOrderError(DomainError):
    pass


class ConfigurationError(PolyaForestError, ValueError):
    exit_code = 1


class DataError(PolyaForestError, ValueError):
    exit_code = 2


class NumericError(PolyaForestError, ArithmeticError):
    exit_code = 3


class DegenerateDensityError(NumericError):
    pass


class ResourceError(PolyaForestError, MemoryError):
    exit_code = 3


class ContractError(PolyaForestError, ValueError):
    """Input violates a precondition such as nonnegativity of a density."""

    exit_code = 2


class PropertyViolation(PolyaForestError, AssertionError):
    exit_code = 4
