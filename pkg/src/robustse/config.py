"""Single structured config file with dotted CLI overrides.

One YAML file carries five sections: `data` (corpus recipe), `stft`,
`model`, `train`, and `mixit`. Every key has a desk-scale default, so an
empty or missing config is a valid small experiment. Overrides are dotted
paths like `train.lr=0.0005` or `mixit.augment.enabled=false`, values
parsed as YAML scalars/lists. `--paper-scale` swaps in the full-size
regime: 1000 epochs, patience 140, bottleneck 512, 3 recurrent layers.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import yaml

from .data import CorpusRecipe
from .dsp import StftConfig
from .errors import ConfigError
from .loss import AGGREGATION_NAMES, DISTANCE_NAMES
from .mixit import AugmentationSpec

SCHEMES = ("traditional", "mixit", "mixit_aug")


@dataclass(frozen=True)
class ModelSettings:
    bottleneck: int = 64
    recurrent_layers: int = 1
    bidirectional: bool = True
    n_outputs: int | None = None  # None: derived from the training scheme

    def __post_init__(self):
        if self.n_outputs is not None and self.n_outputs not in (1, 3):
            raise ConfigError(f"model.n_outputs must be 1, 3, or null, got {self.n_outputs}")


@dataclass(frozen=True)
class TrainSettings:
    scheme: str = "traditional"
    distance: str = "mse"
    sdr_clamp_db: float = 30.0
    aggregation: str = "sample_tf_mean"
    trim_fraction: float = 0.25
    batch_size: int = 16
    epochs: int = 50
    early_stop_patience: int = 10
    lr: float = 0.001
    seed: int = 0
    segment_s: float = 1.0
    grad_clip_norm: float = 5.0
    crops_per_clip: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"train.scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.distance not in DISTANCE_NAMES:
            raise ConfigError(
                f"train.distance must be one of {DISTANCE_NAMES}, got {self.distance!r}"
            )
        if self.aggregation not in AGGREGATION_NAMES:
            raise ConfigError(
                f"train.aggregation must be one of {AGGREGATION_NAMES}, got {self.aggregation!r}"
            )
        if self.early_stop_patience >= self.epochs:
            raise ConfigError(
                f"early_stop_patience ({self.early_stop_patience}) must be < epochs ({self.epochs})"
            )
        if self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.batch_size < 1 or self.segment_s <= 0:
            raise ConfigError("train.batch_size must be >= 1 and train.segment_s > 0")
        if self.crops_per_clip < 1:
            raise ConfigError(f"train.crops_per_clip must be >= 1, got {self.crops_per_clip}")


@dataclass(frozen=True)
class ToolkitConfig:
    data: CorpusRecipe
    stft: StftConfig
    model: ModelSettings
    train: TrainSettings
    mixit_augment: AugmentationSpec


def default_config() -> ToolkitConfig:
    return ToolkitConfig(
        data=CorpusRecipe(),
        stft=StftConfig(),
        model=ModelSettings(),
        train=TrainSettings(),
        mixit_augment=AugmentationSpec(),
    )


def _pair(v, key) -> tuple:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return (v[0], v[1])
    raise ConfigError(f"{key} must be a two-element list, got {v!r}")


def to_dict(cfg: ToolkitConfig) -> dict:
    return {
        "data": {
            "n_clips": cfg.data.n_clips,
            "duration_s": cfg.data.duration_s,
            "sample_rate": cfg.data.sample_rate,
            "seed": cfg.data.seed,
            "split_fractions": list(cfg.data.split_fractions),
            "noisy_rate": cfg.data.noisy_rate,
            "pure_noise_rate": cfg.data.pure_noise_rate,
            "silence_rate": cfg.data.silence_rate,
            "click_rate": cfg.data.click_rate,
            "clicks_per_clip": list(cfg.data.clicks_per_clip),
            "click_amplitude": list(cfg.data.click_amplitude),
            "recording_noise_family": cfg.data.recording_noise_family,
            "recording_snr_db": list(cfg.data.recording_snr_db),
            "mixture_noise_family": cfg.data.mixture_noise_family,
            "mixture_snr_db": list(cfg.data.mixture_snr_db),
        },
        "stft": {
            "frame_size": cfg.stft.frame_size,
            "hop": cfg.stft.hop,
            "window": cfg.stft.window,
        },
        "model": {
            "bottleneck": cfg.model.bottleneck,
            "recurrent_layers": cfg.model.recurrent_layers,
            "bidirectional": cfg.model.bidirectional,
            "n_outputs": cfg.model.n_outputs,
        },
        "train": {
            "scheme": cfg.train.scheme,
            "distance": cfg.train.distance,
            "sdr_clamp_db": cfg.train.sdr_clamp_db,
            "aggregation": cfg.train.aggregation,
            "trim_fraction": cfg.train.trim_fraction,
            "batch_size": cfg.train.batch_size,
            "epochs": cfg.train.epochs,
            "early_stop_patience": cfg.train.early_stop_patience,
            "lr": cfg.train.lr,
            "seed": cfg.train.seed,
            "segment_s": cfg.train.segment_s,
            "grad_clip_norm": cfg.train.grad_clip_norm,
            "crops_per_clip": cfg.train.crops_per_clip,
        },
        "mixit": {
            "augment": {
                "enabled": cfg.mixit_augment.enabled,
                "snr_db": list(cfg.mixit_augment.snr_db_range),
            }
        },
    }


def from_dict(d: dict) -> ToolkitConfig:
    base = to_dict(default_config())
    merged = copy.deepcopy(base)
    for section, values in (d or {}).items():
        if section not in merged:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        _merge(merged[section], values, section)

    data = merged["data"]
    train = merged["train"]
    model = merged["model"]
    stft = merged["stft"]
    aug = merged["mixit"]["augment"]
    try:
        return ToolkitConfig(
            data=CorpusRecipe(
                n_clips=int(data["n_clips"]),
                duration_s=float(data["duration_s"]),
                sample_rate=int(data["sample_rate"]),
                seed=int(data["seed"]),
                split_fractions=tuple(float(f) for f in data["split_fractions"]),
                noisy_rate=float(data["noisy_rate"]),
                pure_noise_rate=float(data["pure_noise_rate"]),
                silence_rate=float(data["silence_rate"]),
                click_rate=float(data["click_rate"]),
                clicks_per_clip=tuple(int(v) for v in _pair(data["clicks_per_clip"], "data.clicks_per_clip")),
                click_amplitude=tuple(float(v) for v in _pair(data["click_amplitude"], "data.click_amplitude")),
                recording_noise_family=str(data["recording_noise_family"]),
                recording_snr_db=tuple(float(v) for v in _pair(data["recording_snr_db"], "data.recording_snr_db")),
                mixture_noise_family=str(data["mixture_noise_family"]),
                mixture_snr_db=tuple(float(v) for v in _pair(data["mixture_snr_db"], "data.mixture_snr_db")),
            ),
            stft=StftConfig(
                frame_size=int(stft["frame_size"]), hop=int(stft["hop"]), window=str(stft["window"])
            ),
            model=ModelSettings(
                bottleneck=int(model["bottleneck"]),
                recurrent_layers=int(model["recurrent_layers"]),
                bidirectional=bool(model["bidirectional"]),
                n_outputs=None if model["n_outputs"] is None else int(model["n_outputs"]),
            ),
            train=TrainSettings(
                scheme=str(train["scheme"]).lower(),
                distance=str(train["distance"]).lower(),
                sdr_clamp_db=float(train["sdr_clamp_db"]),
                aggregation=str(train["aggregation"]).lower(),
                trim_fraction=float(train["trim_fraction"]),
                batch_size=int(train["batch_size"]),
                epochs=int(train["epochs"]),
                early_stop_patience=int(train["early_stop_patience"]),
                lr=float(train["lr"]),
                seed=int(train["seed"]),
                segment_s=float(train["segment_s"]),
                grad_clip_norm=float(train["grad_clip_norm"]),
                crops_per_clip=int(train["crops_per_clip"]),
            ),
            mixit_augment=AugmentationSpec(
                snr_db_range=tuple(float(v) for v in _pair(aug["snr_db"], "mixit.augment.snr_db")),
                enabled=bool(aug["enabled"]),
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def _merge(dst: dict, src: dict, prefix: str) -> None:
    for k, v in src.items():
        if k not in dst:
            raise ConfigError(f"unknown config key {prefix}.{k}")
        if isinstance(dst[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {prefix}.{k} must be a mapping")
            _merge(dst[k], v, f"{prefix}.{k}")
        else:
            dst[k] = v


def load_config(path=None) -> ToolkitConfig:
    if path is None:
        return default_config()
    try:
        with open(str(path)) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping at top level")
    return from_dict(raw)


def apply_overrides(cfg: ToolkitConfig, overrides: list[str]) -> ToolkitConfig:
    """Apply `section.key=value` (or deeper) assignments on top of cfg."""
    d = to_dict(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, raw_value = item.partition("=")
        try:
            value = yaml.safe_load(raw_value)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse override value {raw_value!r}: {exc}") from exc
        node = d
        parts = key.strip().split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key {key!r}")
            node = node[part]
        leaf = parts[-1]
        if leaf not in node:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(node[leaf], dict):
            raise ConfigError(f"config key {key!r} is a section, not a value")
        node[leaf] = value
    return from_dict(d)


def apply_paper_scale(cfg: ToolkitConfig) -> ToolkitConfig:
    """Full-size regime: 1000 epochs, patience 140, bottleneck 512, 3 layers."""
    d = to_dict(cfg)
    d["train"]["epochs"] = 1000
    d["train"]["early_stop_patience"] = 140
    d["model"]["bottleneck"] = 512
    d["model"]["recurrent_layers"] = 3
    return from_dict(d)


def save_snapshot(path, cfg: ToolkitConfig) -> None:
    import os

    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=True)
    os.replace(tmp, str(path))
