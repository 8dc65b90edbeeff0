"""Exception types shared across the package."""


class QHybridError(Exception):
    pass


class ConfigurationError(QHybridError, ValueError):
    """Invalid sizes, hyper-parameters or settings."""


class WireError(QHybridError, IndexError):
    """Gate wires or qubit indices outside the register."""


class BindingError(QHybridError, ValueError):
    """A circuit parameter reference cannot be resolved or differentiated."""


class ShapeError(QHybridError, ValueError):
    pass


class StateError(QHybridError, RuntimeError):
    """Layer backward called without a cached forward pass."""


class FormatError(QHybridError, ValueError):
    """Malformed file on disk. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(QHybridError, FloatingPointError):
    pass
