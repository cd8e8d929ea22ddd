class NPnPError(Exception):
    """Base class for solver errors."""


class DegenerateConfigurationError(NPnPError):
    """Translation is unobservable (e.g. all bearing directions parallel)."""


class ExtractionError(NPnPError):
    """The dual point does not encode a usable quaternion."""


class UnboundedDualError(NPnPError):
    """Line search found a direction along which the barrier objective grows without bound."""


class InsufficientDataError(NPnPError):
    """Too few or degenerate correspondences for a linear method."""


class SceneGenerationError(NPnPError):
    """Could not place enough model points in front of the camera."""
