"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to
fixed process exit statuses without inspecting messages.
"""

from __future__ import annotations


class LearnfamError(Exception):
    exit_code = 1


class UsageError(LearnfamError):
    exit_code = 2


# -- ingestion -------------------------------------------------------------


class IngestionError(LearnfamError):
    exit_code = 3


class ParseError(IngestionError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyData(ParseError):
    pass


class NonFiniteInput(IngestionError, ValueError):
    pass


# -- fitting ---------------------------------------------------------------


class FitError(LearnfamError):
    exit_code = 4


class InvalidDf(FitError, ValueError):
    pass


class TooFewDistinctValues(FitError, ValueError):
    pass


class SpecMismatch(FitError):
    pass


class GroupMismatch(FitError):
    pass


class InsufficientGroups(FitError):
    pass


class NoWithinDf(FitError):
    pass


class SingularWithin(FitError):
    pass


class RankDeficientBasis(FitError):
    pass


class TooFewBins(FitError, ValueError):
    pass


class InvalidB(FitError, ValueError):
    pass


class NotConverged(FitError):
    """Raised when IRLS stops at ``max_iter``; ``result`` holds the last iterate."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


# -- inference -------------------------------------------------------------


class InferenceError(LearnfamError):
    exit_code = 5


class DegenerateVariance(InferenceError, ValueError):
    pass


class OutOfSupport(InferenceError, ValueError):
    pass


# -- persistence -----------------------------------------------------------


class ModelFileError(LearnfamError):
    exit_code = 6
