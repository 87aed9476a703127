"""Mask-estimation network: dense encoder, BLSTM core, per-output decoders.

The layout follows the Open-Unmix family: per-frequency input scaling,
a dense bottleneck with tanh, a (bi)recurrent core, then one decoder head
per output whose final ReLU guarantees non-negative masks. The decoder
input concatenates the bottleneck activations with the recurrent output
(skip connection). For mixture-invariant training the same trunk feeds
three decoder heads; traditional training uses one.

Checkpoints are single torch archives tagged with a format version; loading
any other version fails loudly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .dsp import Spectrogram, StftConfig
from .errors import CheckpointError, ConfigError, ShapeError

CHECKPOINT_FORMAT = "robustse-checkpoint-v1"


@dataclass(frozen=True)
class MaskNetConfig:
    n_freq: int = 513
    bottleneck: int = 512
    recurrent_layers: int = 3
    bidirectional: bool = True
    n_outputs: int = 1

    def __post_init__(self):
        if self.n_outputs not in (1, 3):
            raise ConfigError(f"n_outputs must be 1 or 3, got {self.n_outputs}")
        if self.bottleneck < 1 or self.recurrent_layers < 1 or self.n_freq < 2:
            raise ConfigError(f"invalid model config {self}")


@dataclass
class MaskSet:
    """Non-negative masks of shape (n_outputs, K, T, F)."""

    masks: torch.Tensor

    def __post_init__(self):
        if self.masks.ndim != 4:
            raise ShapeError(f"masks must be (n_outputs, K, T, F), got {tuple(self.masks.shape)}")

    @property
    def n_outputs(self) -> int:
        return self.masks.shape[0]


class MaskNet(nn.Module):
    def __init__(self, cfg: MaskNetConfig):
        super().__init__()
        self.cfg = cfg
        hidden = max(1, cfg.bottleneck // 2) if cfg.bidirectional else cfg.bottleneck
        lstm_out = hidden * (2 if cfg.bidirectional else 1)

        self.register_buffer("input_mean", torch.zeros(cfg.n_freq))
        self.register_buffer("input_scale", torch.ones(cfg.n_freq))
        self.encoder = nn.Linear(cfg.n_freq, cfg.bottleneck)
        self.lstm = nn.LSTM(
            input_size=cfg.bottleneck,
            hidden_size=hidden,
            num_layers=cfg.recurrent_layers,
            bidirectional=cfg.bidirectional,
            batch_first=True,
        )
        self.heads = nn.ModuleList(
            nn.Sequential(
                nn.Linear(cfg.bottleneck + lstm_out, cfg.bottleneck),
                nn.ReLU(),
                nn.Linear(cfg.bottleneck, cfg.n_freq),
                nn.ReLU(),
            )
            for _ in range(cfg.n_outputs)
        )

    def set_input_stats(self, mean: np.ndarray, scale: np.ndarray) -> None:
        """Freeze per-frequency normalization statistics into the model."""
        mean = torch.as_tensor(mean, dtype=self.input_mean.dtype)
        scale = torch.as_tensor(scale, dtype=self.input_scale.dtype)
        if mean.shape != self.input_mean.shape or scale.shape != self.input_scale.shape:
            raise ShapeError(f"stats must have shape ({self.cfg.n_freq},)")
        self.input_mean.copy_(mean)
        self.input_scale.copy_(scale.clamp_min(1e-6))

    def forward(self, mag: torch.Tensor) -> MaskSet:
        """(K, T, F) magnitudes -> MaskSet of (n_outputs, K, T, F) masks."""
        if mag.ndim != 3:
            raise ShapeError(f"expected (K, T, F) magnitudes, got shape {tuple(mag.shape)}")
        if mag.shape[2] != self.cfg.n_freq:
            raise ShapeError(f"expected {self.cfg.n_freq} frequency bins, got {mag.shape[2]}")
        x = (mag - self.input_mean) / self.input_scale
        h = torch.tanh(self.encoder(x))
        r, _ = self.lstm(h)
        z = torch.cat([h, r], dim=-1)
        return MaskSet(masks=torch.stack([head(z) for head in self.heads]))

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)


def apply_mask(masks: MaskSet, X: Spectrogram) -> list[Spectrogram]:
    """Masked spectrograms M_i * |X| carrying the phase of X.

    Since the masks are real and non-negative this equals M_i * X
    elementwise. Expects single-clip masks (K == 1).
    """
    m = masks.masks.detach().cpu().numpy()
    if m.shape[1] != 1:
        raise ShapeError(f"apply_mask expects K=1 masks, got K={m.shape[1]}")
    n_freq, n_frames = X.bins.shape
    if m.shape[2] != n_frames or m.shape[3] != n_freq:
        raise ShapeError(
            f"mask grid (T={m.shape[2]}, F={m.shape[3]}) does not match "
            f"spectrogram (F={n_freq}, T={n_frames})"
        )
    out = []
    for i in range(m.shape[0]):
        bins = m[i, 0].T * X.bins  # (F, T)
        out.append(
            Spectrogram(bins=bins, frame_size=X.frame_size, hop=X.hop, sample_rate=X.sample_rate)
        )
    return out


def save_checkpoint(
    path,
    model: MaskNet,
    stft_cfg: StftConfig,
    optimizer: torch.optim.Optimizer | None = None,
    extra: dict | None = None,
) -> None:
    """Atomic single-archive checkpoint (write temp, then rename)."""
    import os

    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_cfg": asdict(model.cfg),
        "stft_cfg": asdict(stft_cfg),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    path = str(path)
    tmp = path + ".tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    """Load and validate a checkpoint; returns the raw payload dict."""
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"checkpoint {path} has format {payload.get('format') if isinstance(payload, dict) else '?'!r}, "
            f"expected {CHECKPOINT_FORMAT!r}"
        )
    return payload


def model_from_checkpoint(path) -> tuple[MaskNet, StftConfig, dict]:
    """Rebuild the model (eval mode) plus its STFT config from a checkpoint."""
    payload = load_checkpoint(path)
    cfg = MaskNetConfig(**payload["model_cfg"])
    model = MaskNet(cfg)
    model.load_state_dict(payload["model_state"])
    model.eval()
    stft_cfg = StftConfig(**payload["stft_cfg"])
    return model, stft_cfg, payload
