"""Exception hierarchy.

Errors split into two families so callers (the CLI in particular) can tell bad
input apart from a computation that could not finish: ``InputError`` covers
malformed or invalid data and configuration, everything else derives from
``ComputationError``.
"""


class GlucoLensError(Exception):
    """Base class of every error raised by the package."""


class InputError(GlucoLensError):
    """Invalid input data, file content or configuration."""


class ComputationError(GlucoLensError):
    """A model, metric or search could not produce a result."""


# -- ingest -----------------------------------------------------------------


class ParseError(InputError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"line {line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class MalformedRow(ParseError):
    pass


class OutOfRange(ParseError):
    pass


class EmptyTrace(ParseError):
    pass


class UnknownActivityKind(ParseError):
    pass


class OverlappingEvents(ParseError):
    pass


class NegativeMacro(ParseError):
    pass


class NetCarbExceedsTotal(ParseError):
    pass


class PercentSumExceeded(ParseError):
    pass


class StartAfterEnd(ParseError):
    pass


class IdMismatch(InputError):
    pass


class BmiOutOfRange(InputError):
    pass


# -- glycemic core ----------------------------------------------------------


class InsufficientData(InputError):
    pass


class GapTooLarge(InputError):
    pass


class NonPositiveBaseline(InputError):
    pass


class NoMorningSamples(InputError):
    pass


class NoOvernightSamples(InputError):
    pass


# -- features ---------------------------------------------------------------


class NoPriorDays(InputError):
    pass


class EmptyLog(InputError):
    pass


class MissingUpstreamFeature(InputError):
    def __init__(self, feature, detail=""):
        self.feature = feature
        msg = f"missing upstream feature: {feature}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class HeterogeneousSets(InputError):
    pass


# -- resampling -------------------------------------------------------------


class UnscaledData(InputError):
    pass


class SingleClass(InputError):
    pass


class EmptyDataset(InputError):
    pass


# -- models -----------------------------------------------------------------


class EmptyData(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class SingularSystem(ComputationError):
    pass


class DivergedLoss(ComputationError):
    pass


# -- llm bridge -------------------------------------------------------------


class LlmError(ComputationError):
    pass


class Timeout(LlmError):
    pass


class AuthFailure(LlmError):
    pass


class RefusedPrediction(LlmError):
    pass


class NoNumberFound(LlmError):
    pass


class ImplausibleValue(LlmError):
    pass


# -- ensemble ---------------------------------------------------------------


class SchemaMismatch(InputError):
    pass


class MissingProvider(InputError):
    pass


# -- counterfactuals --------------------------------------------------------


class NoCounterfactualFound(ComputationError):
    pass


# -- evaluation -------------------------------------------------------------


class InsufficientClassCount(InputError):
    pass


class ZeroMeanTarget(ComputationError):
    pass


class NonPositiveTruth(InputError):
    pass


class ExperimentError(ComputationError):
    """Wraps a failure inside a repeated experiment with the seed index."""

    def __init__(self, seed_index, seed, cause):
        self.seed_index = seed_index
        self.seed = seed
        self.cause = cause
        super().__init__(f"seed #{seed_index} ({seed}): {type(cause).__name__}: {cause}")
