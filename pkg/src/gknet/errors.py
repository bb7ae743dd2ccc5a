"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A hyperparameter, option value, or layer argument is invalid."""


class ModelSpecError(ConfigError):
    """Model spec text failed to parse or failed the shape-chain check."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DatasetError(ValueError):
    """Dataset directory is missing, empty, or structurally unusable."""


class DecodeError(DatasetError):
    """An image file could not be decoded."""


class CheckpointError(ValueError):
    """Checkpoint file is malformed or inconsistent with its model config."""


class TrainingError(RuntimeError):
    """Training aborted: non-finite loss or an inconsistent run setup."""


class StateError(RuntimeError):
    """Operation called before its prerequisite (e.g. backward before forward)."""
