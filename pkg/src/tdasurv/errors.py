"""Exception types raised across the package.

Every error carries a stable ``code`` (its class name) so the CLI can emit
machine-readable error reports.
"""


class TdasurvError(Exception):
    """Base class for all package errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- label image ingestion / generation ---

class RaggedRows(TdasurvError):
    pass


class InvalidLabel(TdasurvError):
    pass


class InvalidMixture(TdasurvError):
    pass


# --- distance transforms ---

class SingleClassImage(TdasurvError):
    pass


class EmptyClassPresent(TdasurvError):
    pass


# --- cubical complexes / diagrams ---

class AllInfiniteField(TdasurvError):
    pass


class NonPositiveFactor(TdasurvError):
    pass


# --- persistence surfaces ---

class NonPositiveSigma(TdasurvError):
    pass


class EmptyList(TdasurvError):
    pass


class GridMismatch(TdasurvError):
    pass


class NoFinitePairs(TdasurvError):
    pass


# --- FPCA ---

class FewerThanTwoSamples(TdasurvError):
    pass


class KTooLarge(TdasurvError):
    pass


# --- Cox models ---

class NoEvents(TdasurvError):
    pass


class DimensionMismatch(TdasurvError):
    pass


class NonIdentifiable(TdasurvError):
    pass


class MaxIterations(TdasurvError):
    pass


class SingularCovariance(TdasurvError):
    pass


class AllFitsFailed(TdasurvError):
    pass


# --- survival statistics ---

class EmptyData(TdasurvError):
    pass


# --- pipeline / configuration ---

class ConfigError(TdasurvError):
    pass
