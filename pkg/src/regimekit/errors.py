"""Exception hierarchy.

Every error raised deliberately by the library derives from
:class:`RegimeKitError`, and the class name doubles as the diagnostic code the
CLI prints (``SeriesTooShort``, ``DegenerateRegime`` ...).
"""


class RegimeKitError(Exception):
    """Base class for all library errors."""


# data
class DataError(RegimeKitError):
    """Input-data problem; ``row`` is the 1-based data row when known."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class MissingColumn(DataError):
    pass


class UnparseableDate(DataError):
    pass


class NonPositivePrice(DataError):
    pass


class DuplicateDate(DataError):
    pass


class InvalidBar(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class EmptyIntersection(DataError):
    pass


class LengthMismatch(RegimeKitError):
    pass


# model
class ModelError(RegimeKitError):
    pass


class InvalidSpec(ModelError):
    pass


class InvalidInit(ModelError):
    pass


class DegenerateDensity(ModelError):
    pass


class ZeroPredictedProbability(ModelError):
    pass


class DegenerateRegime(ModelError):
    pass


# indicators
class WindowExceedsSeries(RegimeKitError):
    pass


class InvalidSpans(RegimeKitError):
    pass


class InvertedSwing(RegimeKitError):
    pass


# regimes / analysis
class InsufficientHistory(RegimeKitError):
    pass


class NoOverlap(RegimeKitError):
    pass


class InsufficientData(RegimeKitError):
    pass


# strategies / backtest / stats
class MissingIndicator(RegimeKitError):
    pass


class InvalidStrategy(RegimeKitError):
    pass


class NonPositiveEquity(RegimeKitError):
    pass


class ZeroRisk(RegimeKitError):
    pass


class ConfigError(RegimeKitError):
    pass
