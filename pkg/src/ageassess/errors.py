"""Exception hierarchy shared across the package."""


class AgeAssessError(Exception):
    """Base class for all package-specific errors."""


class DataError(AgeAssessError):
    """Malformed or inconsistent input data (files, tables, study summaries)."""


class ModelError(AgeAssessError):
    """The model cannot be reconciled with the data (e.g. an observed
    indicator combination that has zero probability under the current state)."""


class FitError(ModelError):
    """An optimizer failed to converge (perfect separation, boundary cycling, ...)."""
