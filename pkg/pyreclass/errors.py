from __future__ import annotations


class Error(Exception):
    """
    Base class for all pyreclass errors
    """
    pass


class ValidationError(Error, ValueError):
    """
    Inputs that violate the preconditions of an operation
    """
    pass


class NumericalError(Error, ArithmeticError):
    """
    A computation that cannot produce a meaningful number
    """
    pass


class EstimationError(NumericalError):
    """
    Parameter estimation failed, usually because of an empty denominator
    """
    pass


class RankDeficiencyError(NumericalError):
    """
    Regressor matrix without full column rank
    """
    def __init__(self, column: str, message: str | None = None):
        super().__init__(message or f"regressor matrix is rank deficient at column {column!r}")
        self.column = column


class InactiveClassError(ValidationError):
    """
    A class without activity in one of the years of the analysis range
    """
    def __init__(self, class_id: str, year: int):
        super().__init__(f"class {class_id!r} has no activity in year {year}")
        self.class_id = class_id
        self.year = year


class DataError(Error):
    """
    Input data that cannot be read or parsed
    """
    pass
