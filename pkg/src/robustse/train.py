"""Training loop for the three schemes: traditional, mixit, mixit_aug.

Traditional training masks the noisy input's magnitudes toward the
(possibly degraded) target magnitudes under the configured distance and
aggregation. The mixture-invariant schemes feed the network the sum of the
noisy-speech input and a noise-only clip, emit three masked estimates, and
score the better of the two groupings; the augmented variant additionally
adds freshly synthesized noise of each clip's mixture family to the
noisy-speech side at a random SNR.

Reproducibility rules, enforced here:

* torch's RNG is touched exactly once, at model init (manual_seed).
* All data-order, crop, and augmentation randomness comes from numpy
  Generators derived statelessly from (seed, salt, epoch), so epoch k's
  batches do not depend on how many epochs ran before it. Resuming from a
  checkpoint therefore reproduces an uninterrupted run exactly.
* metrics.jsonl carries no wall-clock values; timings live in
  timings.jsonl so metric files from equal-seed runs are byte-identical.

Run directory layout: config.snapshot, metrics.jsonl, timings.jsonl,
checkpoints/{best.pt,last.pt}, run_record.json, diagnostics/ (only after a
non-finite loss).
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .config import ToolkitConfig, save_snapshot, to_dict
from .data import Batch, CorpusLoader, CorpusManifest, iter_batches
from .dsp import Waveform, batch_stft
from .errors import CheckpointError, ConfigError, TrainingDiverged
from .loss import AggregationSpec, DistanceKind, aggregate, distance_error
from .mixit import AugmentationSpec, MixItBatch, augment_input, mixit_assignment_losses, mixit_loss
from .model import MaskNet, MaskNetConfig, save_checkpoint, load_checkpoint
from .synth import synth_noise

SCHEME_TRADITIONAL = "traditional"
SCHEME_MIXIT = "mixit"
SCHEME_MIXIT_AUG = "mixit_aug"

_SALT_TRAIN = 1
_SALT_VALID = 2
_SALT_AUG = 3


@dataclass
class RunRecord:
    run_dir: str
    scheme: str
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    wall_times_s: list = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("inf")
    stopped_epoch: int = 0
    stopped_early: bool = False
    finished: bool = False
    best_checkpoint: str = ""
    last_checkpoint: str = ""
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


class EarlyStopper:
    """Patience counter over validation losses; lower is better."""

    def __init__(self, patience: int):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.waited = 0

    def update(self, epoch: int, val: float) -> str:
        """Returns 'improved', 'wait', or 'stop'."""
        if val < self.best:
            self.best = val
            self.best_epoch = epoch
            self.waited = 0
            return "improved"
        self.waited += 1
        return "stop" if self.waited >= self.patience else "wait"


def resolve_n_outputs(scheme: str, configured: int | None) -> int:
    expected = 1 if scheme == SCHEME_TRADITIONAL else 3
    if configured is not None and configured != expected:
        raise ConfigError(
            f"scheme {scheme!r} needs a {expected}-output model, config says {configured}"
        )
    return expected


def build_model(cfg: ToolkitConfig) -> MaskNet:
    """Seeded model construction; the only consumer of torch's RNG."""
    n_outputs = resolve_n_outputs(cfg.train.scheme, cfg.model.n_outputs)
    torch.manual_seed(cfg.train.seed)
    model_cfg = MaskNetConfig(
        n_freq=cfg.stft.n_freq,
        bottleneck=cfg.model.bottleneck,
        recurrent_layers=cfg.model.recurrent_layers,
        bidirectional=cfg.model.bidirectional,
        n_outputs=n_outputs,
    )
    return MaskNet(model_cfg)


def compute_input_stats(
    loader: CorpusLoader, cfg: ToolkitConfig, split: str = "train"
) -> tuple[np.ndarray, np.ndarray]:
    """Per-frequency mean/std of the magnitudes the network will see."""
    needs_noise = cfg.train.scheme != SCHEME_TRADITIONAL
    total = np.zeros(cfg.stft.n_freq)
    total_sq = np.zeros(cfg.stft.n_freq)
    count = 0
    for ex in loader.load_split(split):
        x = ex.input.samples
        if needs_noise and ex.noise_only is not None:
            x = x + ex.noise_only.samples
        spec = batch_stft(torch.from_numpy(x).unsqueeze(0), cfg.stft).abs()[0]  # (T, F)
        mag = spec.numpy()
        total += mag.sum(axis=0)
        total_sq += np.square(mag).sum(axis=0)
        count += mag.shape[0]
    mean = total / max(count, 1)
    var = np.maximum(total_sq / max(count, 1) - np.square(mean), 0.0)
    return mean, np.sqrt(var) + 1e-6


def _augment_batch(
    x: np.ndarray, families: list, sample_rate: int, spec: AugmentationSpec, rng
) -> np.ndarray:
    rows = []
    for i in range(x.shape[0]):
        n_art = synth_noise(x.shape[1], sample_rate, families[i], rng)
        w, _ = augment_input(Waveform(x[i], sample_rate), n_art, spec, rng)
        rows.append(w.samples)
    return np.stack(rows)


def _forward_loss(
    model: MaskNet,
    batch: Batch,
    cfg: ToolkitConfig,
    d: DistanceKind,
    agg: AggregationSpec,
    scheme: str,
    aug_rng=None,
):
    """Loss for one batch; returns (loss tensor, per-batch log dict)."""
    if scheme == SCHEME_TRADITIONAL:
        x = torch.from_numpy(batch.input).to(torch.float32)
        t = torch.from_numpy(batch.target).to(torch.float32)
        X = batch_stft(x, cfg.stft).abs()
        S = batch_stft(t, cfg.stft).abs()
        est = model(X).masks[0] * X
        return aggregate(distance_error(est, S, d), agg), {}

    x_np = batch.input
    if scheme == SCHEME_MIXIT_AUG:
        x_np = _augment_batch(
            x_np, batch.mixture_families, cfg.data.sample_rate, cfg.mixit_augment, aug_rng
        )
    x = torch.from_numpy(x_np).to(torch.float32)
    n = torch.from_numpy(batch.noise).to(torch.float32)
    X = batch_stft(x, cfg.stft).abs()
    N = batch_stft(n, cfg.stft).abs()
    net_in = batch_stft(x + n, cfg.stft).abs()
    masks = model(net_in).masks
    b = MixItBatch(X=X, N=N, outputs=(masks[0] * net_in, masks[1] * net_in, masks[2] * net_in))
    loss, assignment = mixit_loss(b, d, agg)
    loss_a, loss_b = mixit_assignment_losses(b, d, agg)
    if abs(float(loss.detach()) - min(loss_a, loss_b)) > 1e-5 * max(1.0, abs(min(loss_a, loss_b))):
        raise TrainingDiverged("grouping loss does not match the min of both groupings")
    return loss, {"assignment": assignment, "loss_a": loss_a, "loss_b": loss_b}


def _dump_bad_batch(run_dir: str, epoch: int, batch: Batch) -> str:
    out = os.path.join(run_dir, "diagnostics")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"nonfinite_epoch{epoch:04d}.npz")
    np.savez(
        path,
        input=batch.input,
        target=batch.target,
        noise=batch.noise if batch.noise is not None else np.zeros(0),
        clip_ids=np.array(batch.clip_ids),
    )
    return path


def _validation_batches(loader: CorpusLoader, cfg: ToolkitConfig, need_noise: bool) -> list:
    """Fixed validation crops: derived from the seed only, not the epoch."""
    rng = np.random.default_rng([cfg.train.seed, _SALT_VALID])
    return list(
        iter_batches(
            loader,
            "valid",
            cfg.train.batch_size,
            cfg.train.segment_s,
            rng,
            need_noise=need_noise,
        )
    )


def _metrics_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def _append_line(path: str, line: str) -> None:
    with open(path, "a") as fh:
        fh.write(line + "\n")


def _rewrite_metrics(path: str, keep_up_to_epoch: int) -> None:
    if not os.path.exists(path):
        return
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    kept = [ln for ln in lines if json.loads(ln).get("epoch", 0) <= keep_up_to_epoch]
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(kept) + ("\n" if kept else ""))
    os.replace(tmp, path)


def read_run_record(run_dir: str) -> RunRecord:
    path = os.path.join(run_dir, "run_record.json")
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read run record at {path}: {exc}") from exc
    return RunRecord(**raw)


def train(
    cfg: ToolkitConfig,
    manifest: CorpusManifest,
    run_dir,
    resume: bool = False,
    val_override=None,
    quiet: bool = False,
    max_epochs_this_call: int | None = None,
) -> RunRecord:
    """Run (or resume) one training job into run_dir and return its record.

    `max_epochs_this_call` caps how many epochs this session runs without
    marking the run finished, so a later resume with the same config picks
    up exactly where this call stopped. `val_override` replaces the
    computed validation loss with the given per-epoch sequence; it exists
    to exercise the stopping/checkpoint machinery under a controlled loss
    curve and is not used by the CLI.
    """
    run_dir = str(run_dir)
    scheme = cfg.train.scheme
    need_noise = scheme != SCHEME_TRADITIONAL
    d = DistanceKind(kind=cfg.train.distance, sdr_clamp_db=cfg.train.sdr_clamp_db)
    agg = AggregationSpec(kind=cfg.train.aggregation, trim_fraction=cfg.train.trim_fraction)
    loader = CorpusLoader(manifest)
    ckpt_dir = os.path.join(run_dir, "checkpoints")
    best_path = os.path.join(ckpt_dir, "best.pt")
    last_path = os.path.join(ckpt_dir, "last.pt")
    metrics_path = os.path.join(run_dir, "metrics.jsonl")
    timings_path = os.path.join(run_dir, "timings.jsonl")

    stopper = EarlyStopper(cfg.train.early_stop_patience)
    start_epoch = 1
    model = None
    optimizer = None

    if resume:
        payload = load_checkpoint(last_path)
        extra = payload.get("extra", {})
        if extra.get("config") != to_dict(cfg):
            raise ConfigError("resume config does not match the checkpointed run")
        if extra.get("finished"):
            if not quiet:
                print(f"run in {run_dir} already finished at epoch {extra.get('epoch')}; nothing to do")
            return read_run_record(run_dir)
        model = build_model(cfg)
        model.load_state_dict(payload["model_state"])
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.train.lr)
        optimizer.load_state_dict(payload["optimizer_state"])
        stopper.best = extra["best_val"]
        stopper.best_epoch = extra["best_epoch"]
        stopper.waited = extra["waited"]
        start_epoch = extra["epoch"] + 1
        _rewrite_metrics(metrics_path, extra["epoch"])
        _rewrite_metrics(timings_path, extra["epoch"])
    else:
        os.makedirs(ckpt_dir, exist_ok=True)
        save_snapshot(os.path.join(run_dir, "config.snapshot"), cfg)
        for path in (metrics_path, timings_path):
            if os.path.exists(path):
                os.remove(path)
        model = build_model(cfg)
        mean, scale = compute_input_stats(loader, cfg)
        model.set_input_stats(mean, scale)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.train.lr)

    record = RunRecord(run_dir=run_dir, scheme=scheme, config=to_dict(cfg))
    if resume and start_epoch > 1:
        with open(metrics_path) as fh:
            for ln in fh.read().splitlines():
                if not ln.strip():
                    continue
                rec = json.loads(ln)
                record.train_losses.append(rec["train_loss"])
                record.val_losses.append(rec["val_loss"])
        record.wall_times_s = [0.0] * len(record.train_losses)

    val_batches = _validation_batches(loader, cfg, need_noise)
    stopped_early = False
    epoch = start_epoch - 1
    last_epoch_this_call = cfg.train.epochs
    if max_epochs_this_call is not None:
        last_epoch_this_call = min(
            last_epoch_this_call, start_epoch - 1 + max_epochs_this_call
        )

    for epoch in range(start_epoch, last_epoch_this_call + 1):
        t0 = time.perf_counter()
        model.train()
        train_rng = np.random.default_rng([cfg.train.seed, _SALT_TRAIN, epoch])
        aug_rng = np.random.default_rng([cfg.train.seed, _SALT_AUG, epoch])
        losses = []
        assign_a, assign_b = [], []
        for batch in iter_batches(
            loader,
            "train",
            cfg.train.batch_size,
            cfg.train.segment_s,
            train_rng,
            need_noise,
            crops_per_clip=cfg.train.crops_per_clip,
        ):
            optimizer.zero_grad()
            loss, info = _forward_loss(model, batch, cfg, d, agg, scheme, aug_rng)
            if not torch.isfinite(loss):
                dump = _dump_bad_batch(run_dir, epoch, batch)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}; offending batch saved to {dump}"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.train.grad_clip_norm)
            optimizer.step()
            losses.append(float(loss.detach()))
            if info:
                assign_a.append(info["loss_a"])
                assign_b.append(info["loss_b"])
        train_loss = float(np.mean(losses))

        model.eval()
        if val_override is not None and epoch - 1 < len(val_override):
            val_loss = float(val_override[epoch - 1])
        else:
            with torch.no_grad():
                vals = [
                    float(_forward_loss(model, vb, cfg, d, agg, scheme.removesuffix("_aug"))[0])
                    for vb in val_batches
                ]
            val_loss = float(np.mean(vals))

        verdict = stopper.update(epoch, val_loss)
        if verdict == "improved":
            save_checkpoint(
                best_path,
                model,
                cfg.stft,
                extra={"epoch": epoch, "val_loss": val_loss, "config": to_dict(cfg)},
            )

        wall = time.perf_counter() - t0
        record.train_losses.append(train_loss)
        record.val_losses.append(val_loss)
        record.wall_times_s.append(wall)

        metrics = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_loss": val_loss,
            "best_val": stopper.best,
            "best_epoch": stopper.best_epoch,
        }
        if assign_a:
            metrics["train_loss_grouping_a"] = float(np.mean(assign_a))
            metrics["train_loss_grouping_b"] = float(np.mean(assign_b))
        _append_line(metrics_path, _metrics_line(metrics))
        _append_line(timings_path, _metrics_line({"epoch": epoch, "wall_s": wall}))

        stopped_early = verdict == "stop"
        finished = stopped_early or epoch == cfg.train.epochs
        save_checkpoint(
            last_path,
            model,
            cfg.stft,
            optimizer=optimizer,
            extra={
                "epoch": epoch,
                "best_val": stopper.best,
                "best_epoch": stopper.best_epoch,
                "waited": stopper.waited,
                "finished": finished,
                "config": to_dict(cfg),
            },
        )
        if not quiet:
            print(
                f"epoch {epoch:4d}  train {train_loss:.6f}  val {val_loss:.6f}"
                f"  best {stopper.best:.6f} @ {stopper.best_epoch}"
            )
        if stopped_early:
            break

    record.best_epoch = stopper.best_epoch
    record.best_val = stopper.best
    record.stopped_epoch = epoch
    record.stopped_early = stopped_early
    record.finished = stopped_early or epoch == cfg.train.epochs
    record.best_checkpoint = best_path
    record.last_checkpoint = last_path
    with open(os.path.join(run_dir, "run_record.json"), "w") as fh:
        json.dump(record.to_json(), fh, indent=2, sort_keys=True)
    return record
