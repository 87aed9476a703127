"""Per-bin distances and the axis-ordered robust aggregation family.

Error tensors are indexed (sample k, time frame tau, frequency f). Two
per-bin distances are provided:

  - mse:  (est - ref)^2
  - sdr:  -10*log10((ref^2 + eps) / ((est - ref)^2 + eps)), clamped to
          +-sdr_clamp_db. The sign is flipped relative to a classical SDR
          so that larger error => larger value and every aggregator is
          minimized; eps guards silent bins and perfect estimates.

Aggregators reduce a (K, T, F) error tensor to a scalar in a fixed axis
order; the non-standard orders replace one of the means with a median or
a trimmed mean, which rejects outlying minibatch samples / bins:

  sample_tf_mean               mean over (t, f), then mean over samples
  sample_median_tf_mean        mean over (t, f), then median over samples
  sample_mean_tf_median        median over (t, f), then mean over samples
  sample_mean_tmedian_fmean    mean over f, median over t, mean over samples
  tf_mean_sample_median        median over samples per bin, then mean over bins
  tf_mean_sample_trimmed_mean  mean over the trim_fraction of samples with the
                               smallest error per bin, then mean over bins

Subgradient conventions (chosen for determinism and sparse gradients):
the median of an even count is the lower of the two middle order
statistics; ties are broken toward the lowest index (stable sort); the
trimmed mean keeps n_keep = max(1, floor(trim_fraction * K)) samples per
bin. Gradients flow only into the selected elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ConfigError, ShapeError

MSE = "mse"
SDR = "sdr"
DISTANCE_NAMES = (MSE, SDR)

SAMPLE_TF_MEAN = "sample_tf_mean"
SAMPLE_MEDIAN_TF_MEAN = "sample_median_tf_mean"
SAMPLE_MEAN_TF_MEDIAN = "sample_mean_tf_median"
SAMPLE_MEAN_TMEDIAN_FMEAN = "sample_mean_tmedian_fmean"
TF_MEAN_SAMPLE_MEDIAN = "tf_mean_sample_median"
TF_MEAN_SAMPLE_TRIMMED_MEAN = "tf_mean_sample_trimmed_mean"

AGGREGATION_NAMES = (
    SAMPLE_TF_MEAN,
    SAMPLE_MEDIAN_TF_MEAN,
    SAMPLE_MEAN_TF_MEDIAN,
    SAMPLE_MEAN_TMEDIAN_FMEAN,
    TF_MEAN_SAMPLE_MEDIAN,
    TF_MEAN_SAMPLE_TRIMMED_MEAN,
)


@dataclass(frozen=True)
class DistanceKind:
    """Per-bin distance selector. kind is 'mse' or 'sdr' (case-insensitive)."""

    kind: str = MSE
    sdr_clamp_db: float = 30.0
    epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in DISTANCE_NAMES:
            raise ConfigError(f"unknown distance {self.kind!r}, expected one of {DISTANCE_NAMES}")
        if self.sdr_clamp_db <= 0:
            raise ConfigError(f"sdr_clamp_db must be positive, got {self.sdr_clamp_db}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class AggregationSpec:
    """Aggregation-order selector (case-insensitive names as listed above)."""

    kind: str = SAMPLE_TF_MEAN
    trim_fraction: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        if self.kind not in AGGREGATION_NAMES:
            raise ConfigError(
                f"unknown aggregation {self.kind!r}, expected one of {AGGREGATION_NAMES}"
            )
        if not 0.0 < self.trim_fraction <= 1.0:
            raise ConfigError(f"trim_fraction must be in (0, 1], got {self.trim_fraction}")


@dataclass
class ErrorTensor:
    """Per-(sample, time, frequency) distance values, shape (K, T, F)."""

    values: torch.Tensor
    distance_kind: str

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError(f"error tensor must be (K, T, F), got shape {tuple(self.values.shape)}")
        if not torch.all(torch.isfinite(self.values.detach())):
            raise ShapeError("error tensor contains non-finite values")


def _as_tensor(x) -> torch.Tensor:
    t = x if isinstance(x, torch.Tensor) else torch.as_tensor(x)
    return t.to(torch.get_default_dtype()) if not t.dtype.is_floating_point else t


def _check_pair(est, ref):
    est, ref = _as_tensor(est), _as_tensor(ref)
    if est.shape != ref.shape:
        raise ShapeError(f"shape mismatch: estimate {tuple(est.shape)} vs reference {tuple(ref.shape)}")
    if est.ndim != 3:
        raise ShapeError(f"expected (K, T, F) grids, got shape {tuple(est.shape)}")
    return est, ref


def mse_error(est, ref) -> ErrorTensor:
    """Elementwise squared error (est - ref)^2."""
    est, ref = _check_pair(est, ref)
    return ErrorTensor(values=(est - ref) ** 2, distance_kind=MSE)


def sdr_error(est, ref, d: DistanceKind | None = None) -> ErrorTensor:
    """Per-bin negated, clamped log power ratio (see module docstring)."""
    d = d or DistanceKind(kind=SDR)
    est, ref = _check_pair(est, ref)
    ratio = (ref**2 + d.epsilon) / ((est - ref) ** 2 + d.epsilon)
    values = torch.clamp(-10.0 * torch.log10(ratio), -d.sdr_clamp_db, d.sdr_clamp_db)
    return ErrorTensor(values=values, distance_kind=SDR)


def distance_error(est, ref, d: DistanceKind) -> ErrorTensor:
    return mse_error(est, ref) if d.kind == MSE else sdr_error(est, ref, d)


def _lower_median(x: torch.Tensor, dim: int) -> torch.Tensor:
    """Median along dim; for even counts the lower middle order statistic.

    Stable sort makes tie-breaking deterministic (lowest index wins) and
    routes the gradient to exactly one element.
    """
    n = x.shape[dim]
    s, _ = torch.sort(x, dim=dim, stable=True)
    return s.narrow(dim, (n - 1) // 2, 1).squeeze(dim)


def _trimmed_mean_lowest(x: torch.Tensor, dim: int, trim_fraction: float) -> torch.Tensor:
    """Mean over the n_keep = max(1, floor(trim_fraction*n)) smallest values."""
    n = x.shape[dim]
    n_keep = max(1, int(trim_fraction * n))
    s, _ = torch.sort(x, dim=dim, stable=True)
    return s.narrow(dim, 0, n_keep).mean(dim=dim)


def aggregate(e: ErrorTensor, spec: AggregationSpec) -> torch.Tensor:
    """Reduce a (K, T, F) error tensor to a scalar in the spec's axis order."""
    v = e.values
    k = spec.kind
    if k == SAMPLE_TF_MEAN:
        return v.mean()
    if k == SAMPLE_MEDIAN_TF_MEAN:
        per_sample = v.mean(dim=(1, 2))
        return _lower_median(per_sample, dim=0)
    if k == SAMPLE_MEAN_TF_MEDIAN:
        per_sample = _lower_median(v.reshape(v.shape[0], -1), dim=1)
        return per_sample.mean()
    if k == SAMPLE_MEAN_TMEDIAN_FMEAN:
        per_frame = v.mean(dim=2)  # (K, T)
        per_sample = _lower_median(per_frame, dim=1)
        return per_sample.mean()
    if k == TF_MEAN_SAMPLE_MEDIAN:
        per_bin = _lower_median(v, dim=0)  # (T, F)
        return per_bin.mean()
    if k == TF_MEAN_SAMPLE_TRIMMED_MEAN:
        per_bin = _trimmed_mean_lowest(v, dim=0, trim_fraction=spec.trim_fraction)
        return per_bin.mean()
    raise ConfigError(f"unknown aggregation {k!r}")  # unreachable after validation


def compute_loss(est, ref, d: DistanceKind, spec: AggregationSpec) -> torch.Tensor:
    """aggregate(distance(est, ref)) as a scalar tensor (autograd-ready)."""
    return aggregate(distance_error(est, ref, d), spec)


def loss_gradient(est, ref, d: DistanceKind, spec: AggregationSpec) -> torch.Tensor:
    """d loss / d est as a (K, T, F) tensor.

    Elements rejected by a median/trim selection receive exactly zero.
    """
    est = _as_tensor(est).detach().clone().requires_grad_(True)
    ref = _as_tensor(ref).detach()
    compute_loss(est, ref, d, spec).backward()
    return est.grad.detach()
