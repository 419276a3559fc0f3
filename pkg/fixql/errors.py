from typing import Any


class FixqlError(Exception):
    pass


class SchemaError(FixqlError):
    pass


class ShapeError(FixqlError):
    pass


class RangeRestrictionError(FixqlError):
    def __init__(self, message: str, component: int = -1) -> None:
        super().__init__(message)
        self.component = component


class ArityError(FixqlError):
    pass


class BaseCaseError(FixqlError):
    pass


class ParseError(FixqlError):
    def __init__(self, message: str, position: str = "") -> None:
        super().__init__(f"{message} (at {position})" if position else message)
        self.position = position


class ValidationError(FixqlError):
    pass


class UnknownDialect(FixqlError):
    pass


class UnknownProfile(FixqlError):
    pass


class UnsupportedFeature(FixqlError):
    def __init__(self, message: str, feature: str = "", dialect: Any = None) -> None:
        super().__init__(message)
        self.feature = feature
        self.dialect = dialect


class UncheckedQuery(FixqlError):
    def __init__(self, message: str, report: Any = None) -> None:
        super().__init__(message)
        self.report = report


class NontermError(FixqlError):
    def __init__(self, component: str, iterations: int) -> None:
        super().__init__(
            f"Fix component '{component}' did not converge after {iterations} iterations"
        )
        self.component = component
        self.iterations = iterations


class MissingTable(FixqlError):
    def __init__(self, name: str) -> None:
        super().__init__(f"Table '{name}' not found")
        self.name = name


class EvalTypeError(FixqlError):
    pass


class DivisionByZero(FixqlError):
    pass


class InternalError(FixqlError):
    pass
