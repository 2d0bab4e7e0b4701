"""Exception hierarchy shared across the simulator."""


class SsvepNavError(Exception):
    """Base class for all package errors."""


class ParameterError(SsvepNavError, ValueError):
    """Invalid argument or configuration value."""


class DataError(SsvepNavError, ValueError):
    """Malformed or non-finite data fed into a processing stage."""


class FormatError(SsvepNavError, ValueError):
    """Persisted file does not match the expected on-disk format."""


class ModelError(SsvepNavError):
    """Classifier misuse: wrong shapes, or prediction from an untrained model."""


class TrainingError(SsvepNavError):
    """Degenerate training setup (e.g. a single-class dataset)."""


class DetectionError(SsvepNavError, ValueError):
    """Degenerate detection geometry; the caller should re-detect."""


class TransitionError(SsvepNavError):
    """Event not legal in the current navigation state."""


class NoTargetError(SsvepNavError):
    """Decoded stimulus has no matching on-screen detection."""


class NavigationFault(SsvepNavError):
    """Walk target unreachable within the step budget."""


class ProtocolError(SsvepNavError, ValueError):
    """Malformed operator-console wire message."""
