"""Exception hierarchy.  The CLI maps each class to an exit code."""


class SoftmaxDRError(Exception):
    exit_code = 1


class InvalidArgumentError(SoftmaxDRError, ValueError):
    exit_code = 2


class ParseError(InvalidArgumentError):
    exit_code = 2


class SchemaError(InvalidArgumentError):
    exit_code = 2


class PositivityError(SoftmaxDRError, ValueError):
    exit_code = 3


class FitError(SoftmaxDRError):
    exit_code = 3


class InsufficientDataError(FitError):
    exit_code = 3


class NuisanceEvaluationError(SoftmaxDRError):
    exit_code = 4


class NumericError(SoftmaxDRError, ArithmeticError):
    exit_code = 4


class ExperimentError(NumericError):
    exit_code = 4


class AcceptanceFailure(SoftmaxDRError):
    exit_code = 5
