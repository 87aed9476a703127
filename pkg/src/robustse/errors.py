"""Exception types shared across the toolkit."""


class RobustSEError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(RobustSEError):
    """Tensor/grid shapes do not match the operation's contract."""


class LengthError(RobustSEError):
    """Waveform too short for the requested transform."""


class ConfigError(RobustSEError):
    """Invalid or inconsistent configuration."""


class ManifestError(RobustSEError):
    """Corpus manifest or clip recipe is invalid or unreadable."""


class RecipeError(RobustSEError):
    """Corpus recipe with impossible proportions or parameters."""


class DegenerateNoiseError(RobustSEError):
    """Noise signal has no energy; SNR-controlled mixing is undefined."""


class CheckpointError(RobustSEError):
    """Checkpoint missing, corrupted, or of an incompatible format version."""


class TrainingDiverged(RobustSEError):
    """Loss became non-finite; diagnostic dump written before aborting."""
