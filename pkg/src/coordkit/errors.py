"""Exception taxonomy shared across the package.

CLI exit-code mapping: DataError subclasses -> 1, UsageError/ConfigError -> 2,
anything else under CoordkitError -> 3 (internal).
"""


class CoordkitError(Exception):
    """Base class for all package errors."""


class DataError(CoordkitError):
    """Malformed or inconsistent input data."""


class SchemaError(DataError):
    """A span or label structure violates the labeling schema."""


class DecodeError(DataError):
    """Label sequence with invalid grammar; carries the first offending index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"{message} (first offending index {index})")
        self.index = index


class TreeParseError(DataError):
    """Bracketed tree could not be parsed; carries the byte offset."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EncoderLengthError(DataError):
    """Input sequence exceeds the encoder's maximum length."""


class PairingError(DataError):
    """Conjuncts of a respectively construction cannot be split into equal groups."""


class CheckpointError(DataError):
    """Checkpoint version, shape, or constraint table mismatch."""


class ConfigError(CoordkitError):
    """Invalid configuration file or overrides."""


class UsageError(CoordkitError):
    """Bad command invocation (missing paths, contradictory flags)."""


class TrainingDiverged(CoordkitError):
    """Non-finite loss during training; carries diagnostics."""

    def __init__(self, message: str, epoch: int, batch: int, loss: float):
        super().__init__(f"{message} (epoch {epoch}, batch {batch}, loss {loss!r})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class InfeasiblePathError(CoordkitError):
    """Every label path is masked out; indicates an internal constraint bug."""
