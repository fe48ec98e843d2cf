"""Exception types shared across the package."""


class GradiqaError(Exception):
    """Base class for all package-specific failures."""


class DimensionError(GradiqaError, ValueError):
    """A plane or kernel does not meet a size requirement."""


class FormatError(GradiqaError, ValueError):
    """An input file is not in a supported raster format."""


class ParameterError(GradiqaError, ValueError):
    """An argument is outside its valid range."""


class FitError(GradiqaError, ValueError):
    """A distribution fit received degenerate or insufficient samples."""


class DegenerateInputError(GradiqaError, ValueError):
    """A correlation was requested on constant or too-short sequences."""

class DatasetError(GradiqaError, ValueError):
    """A training dataset violates a precondition (too few rows, bad split)."""


class DivergenceError(GradiqaError, RuntimeError):
    """Training produced a non-finite loss.  Carries the history so far."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class ModelFormatError(GradiqaError, ValueError):
    """A model file is malformed, truncated, or inconsistent."""


class LayoutError(GradiqaError, ValueError):
    """A dataset directory does not follow the expected on-disk layout."""
