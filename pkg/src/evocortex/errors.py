"""Exception hierarchy shared across the package.

CLI exit codes: ConfigError maps to 2, DataError to 3, everything else to 1.
"""


class EvocortexError(Exception):
    """Base class for all package errors."""


class ConfigError(EvocortexError):
    """Invalid run configuration (missing paths, bad parameters, mixed artifacts)."""


class DataError(EvocortexError):
    """Unusable input data (unreadable files, degenerate datasets)."""


class FormatError(DataError):
    """File exists but is not a supported/parseable format."""


class EvaluationError(EvocortexError):
    """Programming-level failure while interpreting a syntax tree (unbound terminal)."""


class ConvergenceError(EvocortexError):
    """An iterative optimizer hit its iteration cap before reaching tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class TrainingError(EvocortexError):
    """Model training diverged; carries the last good checkpoint when available."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class PlacementError(EvocortexError):
    """Patch footprint does not fit inside the target image."""


class InsufficientDataError(DataError):
    """A statistical routine received fewer observations than it requires."""


class DegenerateSampleError(DataError):
    """A statistical routine received a sample with no variation."""


class UndefinedRatioError(EvocortexError):
    """Robustness ratio is undefined because clean accuracy is zero."""
