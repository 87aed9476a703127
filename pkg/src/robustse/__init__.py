"""Speech enhancement training toolkit: noise-robust loss aggregations and
mixture-invariant training with noise augmentation, on a hermetic synthetic
corpus."""

__version__ = "0.1.0"

from .dsp import StftConfig, Waveform, Spectrogram, stft, istft, magnitude
from .loss import AggregationSpec, DistanceKind, compute_loss
from .errors import RobustSEError

__all__ = [
    "StftConfig",
    "Waveform",
    "Spectrogram",
    "stft",
    "istft",
    "magnitude",
    "AggregationSpec",
    "DistanceKind",
    "compute_loss",
    "RobustSEError",
    "__version__",
]
