"""Mixture-invariant training loss over three outputs, plus noise augmentation.

The separation model emits three magnitude grids (X1_hat, X2_hat, X3_hat)
for an input mixture of noisy speech X and noise-only data N. The loss is
the better of the two groupings

    A:  L(X1_hat + X2_hat, X) + L(X3_hat, N)
    B:  L(X1_hat + X3_hat, X) + L(X2_hat, N)

so X1_hat is the designated speech branch (it sits on the X side of both
groupings). Gradients flow only through the winning grouping; ties resolve
to A.

Training with mismatched noise distributions lets the model park speech in
X2_hat/X3_hat; the augmentation here adds an extra noise drawn from the
same corpus as N to the noisy-speech input at a random SNR, which forces
both non-speech branches to carry noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .dsp import Waveform
from .errors import DegenerateNoiseError, ShapeError
from .loss import AggregationSpec, DistanceKind, aggregate, distance_error

ASSIGNMENT_A = "A"  # X1+X2 -> X, X3 -> N
ASSIGNMENT_B = "B"  # X1+X3 -> X, X2 -> N


@dataclass
class MixItBatch:
    """Magnitude grids for one training step, all shaped (K, T, F).

    X is the noisy-speech input (already augmented if augmentation is on),
    N the noise-only input, outputs the three masked model estimates.
    """

    X: torch.Tensor
    N: torch.Tensor
    outputs: tuple[torch.Tensor, torch.Tensor, torch.Tensor]

    def __post_init__(self):
        if len(self.outputs) != 3:
            raise ShapeError(f"expected 3 outputs, got {len(self.outputs)}")
        for grid in (self.N, *self.outputs):
            if grid.shape != self.X.shape:
                raise ShapeError(
                    f"all grids must share shape {tuple(self.X.shape)}, got {tuple(grid.shape)}"
                )


@dataclass(frozen=True)
class AugmentationSpec:
    """Mixing-SNR range (dB) for the added artificial noise."""

    snr_db_range: tuple[float, float] = (0.0, 15.0)
    enabled: bool = True

    def __post_init__(self):
        lo, hi = self.snr_db_range
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise ShapeError(f"snr_db_range must be a finite (low, high) pair, got {self.snr_db_range}")


def mixit_loss(
    b: MixItBatch, d: DistanceKind, spec: AggregationSpec
) -> tuple[torch.Tensor, str]:
    """Minimum over the two groupings; returns (scalar loss, winning assignment).

    Only the winning grouping's terms stay on the autograd tape.
    """
    x1, x2, x3 = b.outputs

    def term(est, ref):
        return aggregate(distance_error(est, ref, d), spec)

    loss_a = term(x1 + x2, b.X) + term(x3, b.N)
    loss_b = term(x1 + x3, b.X) + term(x2, b.N)
    if loss_a.item() <= loss_b.item():
        return loss_a, ASSIGNMENT_A
    return loss_b, ASSIGNMENT_B


def mixit_assignment_losses(
    b: MixItBatch, d: DistanceKind, spec: AggregationSpec
) -> tuple[float, float]:
    """Both grouping losses as plain floats (logging/diagnostics)."""
    x1, x2, x3 = b.outputs
    with torch.no_grad():
        loss_a = aggregate(distance_error(x1 + x2, b.X, d), spec) + aggregate(
            distance_error(x3, b.N, d), spec
        )
        loss_b = aggregate(distance_error(x1 + x3, b.X, d), spec) + aggregate(
            distance_error(x2, b.N, d), spec
        )
    return float(loss_a), float(loss_b)


def speech_estimate(b: MixItBatch) -> torch.Tensor:
    """The designated speech branch X1_hat."""
    return b.outputs[0]


def snr_gain(signal: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    """Gain g such that 10*log10(E[signal] / E[g*noise]) == snr_db."""
    e_sig = float(np.sum(np.square(signal, dtype=np.float64)))
    e_noise = float(np.sum(np.square(noise, dtype=np.float64)))
    if e_noise <= 0.0:
        raise DegenerateNoiseError("noise signal has zero energy")
    return float(np.sqrt(e_sig / (e_noise * 10.0 ** (snr_db / 10.0))))


def augment_input(
    s_plus_rec: Waveform,
    n_artificial: Waveform,
    spec: AugmentationSpec,
    rng: np.random.Generator,
) -> tuple[Waveform, float]:
    """Add artificial noise to the noisy-speech input at a drawn SNR.

    Returns the augmented waveform and the gain applied to n_artificial
    (0 when disabled). Raises DegenerateNoiseError for silent noise.
    """
    if not spec.enabled:
        return s_plus_rec, 0.0
    if len(s_plus_rec) != len(n_artificial):
        raise ShapeError(
            f"length mismatch: input {len(s_plus_rec)} vs noise {len(n_artificial)}"
        )
    snr_db = float(rng.uniform(*spec.snr_db_range))
    g = snr_gain(s_plus_rec.samples, n_artificial.samples, snr_db)
    mixed = s_plus_rec.samples + g * n_artificial.samples
    return Waveform(samples=mixed, sample_rate=s_plus_rec.sample_rate), g
