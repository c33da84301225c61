"""Exception types shared across the library.

Every error raised on a contract violation is a subclass of PamlabError,
so callers can catch one type at the boundary (the CLI does this).
"""


class PamlabError(Exception):
    """Base class for all library errors."""


class InvalidGridError(PamlabError, ValueError):
    """Grid or mesh parameter that cannot produce a valid discretization."""


class InvalidGraphError(PamlabError, ValueError):
    """Disconnected or otherwise malformed metric-graph input."""


class InvalidWordError(PamlabError, ValueError):
    """Cell address with letters outside {1, 2, 3} or wrong length."""


class MissingBoundaryError(PamlabError, ValueError):
    """Dirichlet condition requested on a space with no boundary vertices."""


class EigensolverError(PamlabError, RuntimeError):
    """Eigendecomposition failed its residual or orthogonality checks."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InvalidTimeError(PamlabError, ValueError):
    """Nonpositive time passed where t > 0 is required."""


class FieldMismatchError(PamlabError, ValueError):
    """Field length does not match the active vertex set."""


class InvalidOrderError(PamlabError, ValueError):
    """Nonpositive fractional order."""


class InsufficientSpectrumError(PamlabError, ValueError):
    """Too few eigenvalues below the trusted cutoff for a dimension fit."""


class InvalidStepError(PamlabError, ValueError):
    """Time step that is nonpositive or does not resolve the spectrum."""


class BlowupError(PamlabError, RuntimeError):
    """Solution left the representable range mid-run."""

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class SizeLimitError(PamlabError, ValueError):
    """Dense two-point state would exceed the supported vertex count."""


class InvalidWindowError(PamlabError, ValueError):
    """Fit window with too few points or nonpositive values."""


class InvalidConfigurationError(PamlabError, ValueError):
    """Inconsistent combination of run parameters."""


class UnsupportedRegimeError(PamlabError, ValueError):
    """Parameter range the estimator is not defined for."""


class InvalidRegionError(PamlabError, ValueError):
    """Empty region, or start vertex outside the region."""


class RecurrenceError(PamlabError, ValueError):
    """Dimension pair with d_h >= d_w, outside the recurrent range."""


class CompareError(PamlabError, ValueError):
    """Report comparison attempted across mismatched schemas."""


class ConfigError(PamlabError, ValueError):
    """Experiment configuration failed validation.

    ``field`` names the offending entry so the CLI can point at it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
