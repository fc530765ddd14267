"""Exception hierarchy shared by every module."""


class TwoSidedError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TwoSidedError, ValueError):
    pass


class InvalidLabelError(TwoSidedError, ValueError):
    pass


class InvalidLevelError(TwoSidedError, ValueError):
    pass


class InvalidDimensionError(TwoSidedError, ValueError):
    pass


class SchemaError(TwoSidedError, ValueError):
    pass


class DegenerateDomainError(TwoSidedError, ValueError):
    pass


class DivergenceError(TwoSidedError, ArithmeticError):
    def __init__(self, epoch, value):
        super().__init__(f"objective became non-finite ({value}) at epoch {epoch}")
        self.epoch = epoch
        self.value = value


class SingularityError(TwoSidedError, ArithmeticError):
    pass


class ConflictError(TwoSidedError, ValueError):
    pass


class InvalidRankError(TwoSidedError, ValueError):
    pass


class UnknownBaselineError(TwoSidedError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class UnsupportedSchemaError(TwoSidedError, ValueError):
    pass


class ProtocolViolationError(TwoSidedError, ValueError):
    pass


class ConfigurationError(TwoSidedError, ValueError):
    pass


class EmptyEvaluationError(TwoSidedError, ValueError):
    pass


class ParseError(TwoSidedError, ValueError):
    pass


class EmptyDatasetError(TwoSidedError, ValueError):
    pass


class LoaderError(TwoSidedError, ValueError):
    pass
