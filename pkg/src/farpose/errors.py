"""Exception types shared across the package."""


class FarposeError(Exception):
    """Base class for all package errors."""


class DegenerateInput(FarposeError, ValueError):
    """Input geometry does not determine a unique answer."""


class NoConvergence(FarposeError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class TriangulationFailure(FarposeError):
    """No reliable camera subset produced an acceptable triangulation."""


class ConfigError(FarposeError, ValueError):
    """Invalid configuration values."""


class ShapeMismatch(FarposeError, ValueError):
    """Array or tensor shapes are incompatible."""


class AllZeroConfidence(FarposeError, ValueError):
    """Confidence-weighted fusion received no positive weight."""
