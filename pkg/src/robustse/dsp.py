"""STFT analysis/synthesis with perfect-reconstruction guarantees.

Conventions (frozen for this project):
  - periodic Hann window for analysis and synthesis, hop = frame_size / 4
    by default (COLA holds for any hop dividing frame_size with
    hop <= frame_size / 2);
  - frames are centered: the signal is reflect-padded by frame_size / 2 at
    both ends, so T = 1 + floor(len(x) / hop);
  - synthesis is weighted overlap-add with window-envelope normalization;
  - enhanced speech reuses the mixture phase (magnitude masking).

All functions are pure and deterministic; numpy-facing ops compute in
float64 internally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import ConfigError, LengthError, ShapeError


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters. hop must divide frame_size and be
    at most frame_size/2 so overlap-add reconstruction is exact."""

    frame_size: int = 1024
    hop: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_size <= 0 or self.hop <= 0:
            raise ConfigError(f"frame_size/hop must be positive, got {self.frame_size}/{self.hop}")
        if self.frame_size % self.hop != 0 or self.hop > self.frame_size // 2:
            raise ConfigError(
                f"hop must divide frame_size and be <= frame_size/2 (COLA), "
                f"got frame_size={self.frame_size}, hop={self.hop}"
            )
        if self.window != "hann":
            raise ConfigError(f"unsupported window {self.window!r} (only 'hann')")

    @property
    def n_freq(self) -> int:
        return self.frame_size // 2 + 1

    def num_frames(self, n_samples: int) -> int:
        """Frame count for a centered analysis of n_samples."""
        return 1 + n_samples // self.hop


@dataclass
class Waveform:
    """Mono time-domain audio."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ShapeError(f"waveform must be non-empty 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ShapeError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class Spectrogram:
    """Complex time-frequency grid of shape (n_freq, n_frames)."""

    bins: np.ndarray
    frame_size: int
    hop: int
    sample_rate: int = 16000

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 2:
            raise ShapeError(f"spectrogram must be 2-D, got shape {self.bins.shape}")
        if self.bins.shape[0] != self.frame_size // 2 + 1:
            raise ShapeError(
                f"expected {self.frame_size // 2 + 1} frequency bins for "
                f"frame_size={self.frame_size}, got {self.bins.shape[0]}"
            )
        if not np.all(np.isfinite(self.bins)):
            raise ShapeError("spectrogram contains non-finite bins")

    @property
    def shape(self):
        return self.bins.shape


def _window(cfg: StftConfig, dtype=torch.float64) -> torch.Tensor:
    return torch.hann_window(cfg.frame_size, periodic=True, dtype=dtype)


def batch_stft(x: torch.Tensor, cfg: StftConfig) -> torch.Tensor:
    """STFT of a (K, n_samples) batch -> complex (K, T, F).

    Centered frames, reflect padding. Differentiable and deterministic.
    """
    if x.ndim != 2:
        raise ShapeError(f"expected (K, samples), got shape {tuple(x.shape)}")
    if x.shape[1] < cfg.frame_size:
        raise LengthError(
            f"signal of {x.shape[1]} samples is shorter than one frame ({cfg.frame_size})"
        )
    spec = torch.stft(
        x,
        n_fft=cfg.frame_size,
        hop_length=cfg.hop,
        window=_window(cfg, x.dtype),
        center=True,
        pad_mode="reflect",
        onesided=True,
        return_complex=True,
    )
    return spec.transpose(1, 2)  # (K, F, T) -> (K, T, F)


def batch_istft(spec: torch.Tensor, cfg: StftConfig, out_len: int) -> torch.Tensor:
    """Inverse of batch_stft for a complex (K, T, F) grid -> (K, out_len)."""
    if spec.ndim != 3:
        raise ShapeError(f"expected (K, T, F), got shape {tuple(spec.shape)}")
    if spec.shape[2] != cfg.n_freq:
        raise ConfigError(
            f"spectrogram has {spec.shape[2]} bins but config expects {cfg.n_freq}"
        )
    real_dtype = torch.real(spec).dtype
    return torch.istft(
        spec.transpose(1, 2),
        n_fft=cfg.frame_size,
        hop_length=cfg.hop,
        window=_window(cfg, real_dtype),
        center=True,
        length=out_len,
    )


def stft(w: Waveform, cfg: StftConfig) -> Spectrogram:
    """Analyze a waveform into a complex (F, T) spectrogram."""
    if len(w) < cfg.frame_size:
        raise LengthError(
            f"waveform of {len(w)} samples is shorter than one frame ({cfg.frame_size})"
        )
    x = torch.from_numpy(np.ascontiguousarray(w.samples))
    spec = batch_stft(x.unsqueeze(0), cfg)[0]  # (T, F)
    return Spectrogram(
        bins=spec.numpy().T,
        frame_size=cfg.frame_size,
        hop=cfg.hop,
        sample_rate=w.sample_rate,
    )


def istft(S: Spectrogram, cfg: StftConfig, out_len: int) -> Waveform:
    """Overlap-add synthesis back to out_len samples."""
    if S.frame_size != cfg.frame_size or S.hop != cfg.hop:
        raise ConfigError(
            f"spectrogram was analyzed with frame/hop {S.frame_size}/{S.hop}, "
            f"config has {cfg.frame_size}/{cfg.hop}"
        )
    spec = torch.from_numpy(S.bins.T).unsqueeze(0)  # (1, T, F)
    y = batch_istft(spec, cfg, out_len)[0]
    return Waveform(samples=y.numpy(), sample_rate=S.sample_rate)


def magnitude(S: Spectrogram) -> np.ndarray:
    """Elementwise modulus of the complex grid; non-negative (F, T)."""
    return np.abs(S.bins)
