"""Exception types shared across the package.

Two broad classes: PreconditionError for caller contract violations
(bad sizes, bad ranges) and ValidationError for malformed data
(non-finite values, broken files). Checkpoint I/O gets its own pair so
corrupt files and schema drift stay distinguishable.
"""


class VoxalignError(Exception):
    pass


class PreconditionError(VoxalignError, ValueError):
    """An argument violates a documented precondition."""


class ValidationError(VoxalignError, ValueError):
    """Data failed validation (shape, finiteness, range, file contents)."""


class CorruptCheckpointError(VoxalignError):
    """Checkpoint file is truncated or otherwise unreadable."""


class CheckpointVersionError(VoxalignError):
    """Checkpoint was written under an incompatible schema version."""


class TrainingDivergedError(VoxalignError):
    """A non-finite loss or gradient appeared during training."""
