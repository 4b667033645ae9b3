"""Exception hierarchy shared by every crackSeg package."""


class CrackSegError(Exception):
    """Base class for all crackSeg failures."""


class DimensionError(CrackSegError, ValueError):
    """Tensor shapes are incompatible with an operation."""


class ContractError(CrackSegError, RuntimeError):
    """A caller broke an API precondition (non-scalar loss, consumed tape, missing grad...)."""


class CheckpointError(CrackSegError):
    """A checkpoint file is missing, corrupt, or does not match the model."""


class IngestionError(CrackSegError):
    """A dataset directory is malformed (orphan images or masks, missing folders)."""


class ImageFormatError(CrackSegError):
    """A file is not a readable 8-bit PNG."""


class ConfigError(CrackSegError, ValueError):
    """A configuration value violates its documented range."""


class TrainingError(CrackSegError, RuntimeError):
    """Training had to abort, e.g. on a non-finite loss."""
