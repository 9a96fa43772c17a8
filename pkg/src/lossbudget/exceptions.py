class LossAnalysisError(Exception):
    """Base class for every error raised by lossbudget."""


class NonPositiveInputError(LossAnalysisError, ValueError):
    pass


class ConfigurationError(LossAnalysisError):
    """A config, dataset or CLI argument could not be resolved."""


# resonance

class InvalidTraceError(LossAnalysisError, ValueError):
    pass


class NoResonanceError(LossAnalysisError):
    pass


class IllConditionedFitError(LossAnalysisError):
    pass


class SpanTooNarrowError(LossAnalysisError):
    pass


class NonDecayingError(LossAnalysisError):
    pass


# tls-model

class InsufficientSpanError(LossAnalysisError):
    pass


# participation

class KindMismatchError(LossAnalysisError, ValueError):
    pass


class ZeroTotalEnergyError(LossAnalysisError):
    pass


class ZeroDenominatorError(LossAnalysisError):
    pass


class PositionOutOfRangeError(LossAnalysisError, ValueError):
    pass


class GridMismatchError(LossAnalysisError):
    pass


class ZeroLocalFieldError(LossAnalysisError):
    pass


class InsufficientPointsError(LossAnalysisError):
    pass


class NonConvergentError(LossAnalysisError):
    pass


class NonPositiveCorrectionError(LossAnalysisError, ValueError):
    pass


# solver

class UnitMismatchError(LossAnalysisError):
    pass


class RankDeficientError(LossAnalysisError):
    pass


class ShapeMismatchError(LossAnalysisError):
    pass


class ZeroParticipationError(LossAnalysisError):
    pass


class EmptyInputError(LossAnalysisError):
    pass


class UnboundedIntervalError(LossAnalysisError):
    pass


# budget

class LabelMismatchError(LossAnalysisError):
    pass


class NoOverlapError(LossAnalysisError):
    pass
