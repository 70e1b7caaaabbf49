"""Exception types shared across the package."""


class NodeBudgetError(RuntimeError):
    """A requested grid would exceed the configured node budget."""


class ConvergenceError(RuntimeError):
    """Two quadrature resolutions disagree beyond the accepted tolerance."""


class WindowConstructionError(ConvergenceError):
    """The window tabulation failed its partition-of-unity audit."""


class BandwidthError(ValueError):
    """Input bandwidth exceeds what the frame can represent exactly."""


class ValidationError(ValueError):
    """Invalid configuration or arguments; maps to CLI exit code 2."""
