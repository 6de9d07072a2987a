"""Exception types shared across the package."""


class GridError(ValueError):
    """Invalid grid construction (bad bounds or too few nodes)."""


class FieldError(ValueError):
    """Scalar-field invariant violation (wrong length, non-finite, bad density)."""


class NodeAtZeroError(ValueError):
    """An operation requiring a strictly positive density hit a zero/negative node."""


class ParameterError(ValueError):
    """Invalid physical or model parameter (nonpositive input, zero temperature)."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class StabilityError(RuntimeError):
    """Time step violates a stability bound, or an evolution went unstable."""


class SamplingError(ValueError):
    """Monte Carlo configuration cannot produce the requested samples."""


class QuadratureBudgetError(ValueError):
    """Truncation of the exponentially weighted quadrature exceeds its error budget."""


class ConfigError(ValueError):
    """Experiment configuration failed to parse or validate."""

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class StageError(RuntimeError):
    """A verification stage failed; carries the stage name for context."""

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
