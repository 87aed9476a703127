"""Evaluation metrics and per-corpus reports.

SI-SDR (scale-invariant signal-to-distortion ratio, clamped to +-60 dB)
stands in for perceptual scores; segmental SNR (32 ms frames, 50% overlap,
per-frame clamp [-10, 35] dB) is reported alongside. For three-output
models the report adds per-branch speech-leak fractions: the squared
normalized correlation between each branch signal and the clean voice,
which is 1.0 for a perfect copy and 0 for an unrelated signal.

Evaluation always runs on full clips (no cropping) and needs the corpus to
carry clean references; clips without one are skipped and counted.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .data import CorpusLoader, CorpusManifest
from .dsp import StftConfig, Waveform, istft, magnitude, stft
from .errors import DegenerateNoiseError
from .model import MaskNet, apply_mask, model_from_checkpoint

SI_SDR_CLAMP_DB = 60.0
SEG_FRAME_S = 0.032
SEG_CLAMP_DB = (-10.0, 35.0)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b))


def si_sdr(est: Waveform, ref: Waveform) -> float:
    """Scale-invariant SDR in dB, clamped to +-60."""
    if len(est) != len(ref):
        raise ValueError(f"length mismatch: {len(est)} vs {len(ref)}")
    s = ref.samples
    s_hat = est.samples
    e_ref = _dot(s, s)
    if e_ref <= 0.0:
        raise DegenerateNoiseError("reference signal has zero energy")
    alpha = _dot(s_hat, s) / e_ref
    proj = alpha * s
    e_proj = _dot(proj, proj)
    e_err = _dot(proj - s_hat, proj - s_hat)
    if e_proj <= 0.0:
        return -SI_SDR_CLAMP_DB
    if e_err <= 0.0:
        return SI_SDR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(e_proj / e_err), -SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))


def segmental_snr(est: Waveform, ref: Waveform) -> float:
    """Mean of per-frame SNRs over 32 ms half-overlapped frames."""
    if len(est) != len(ref):
        raise ValueError(f"length mismatch: {len(est)} vs {len(ref)}")
    frame = max(1, int(SEG_FRAME_S * ref.sample_rate))
    hop = max(1, frame // 2)
    s = ref.samples
    err = ref.samples - est.samples
    snrs = []
    tiny = 1e-12
    for k in range(0, max(1, len(s) - frame + 1), hop):
        e_s = _dot(s[k : k + frame], s[k : k + frame])
        e_e = _dot(err[k : k + frame], err[k : k + frame])
        snr = 10.0 * np.log10((e_s + tiny) / (e_e + tiny))
        snrs.append(float(np.clip(snr, *SEG_CLAMP_DB)))
    return float(np.mean(snrs))


def speech_leak(branch: Waveform, s: Waveform) -> float:
    """Squared normalized correlation of a branch with the clean voice.

    Lies in [0, 1]; a silent branch reports 0 by convention.
    """
    if len(branch) != len(s):
        raise ValueError(f"length mismatch: {len(branch)} vs {len(s)}")
    e_b = _dot(branch.samples, branch.samples)
    e_s = _dot(s.samples, s.samples)
    if e_b <= 0.0 or e_s <= 0.0:
        return 0.0
    c = _dot(branch.samples, s.samples)
    return float(np.clip(c * c / (e_s * e_b), 0.0, 1.0))


def enhance_clip(model: MaskNet, stft_cfg: StftConfig, w: Waveform) -> list[Waveform]:
    """Full-clip mask enhancement; returns one waveform per model output."""
    S = stft(w, stft_cfg)
    mag = torch.from_numpy(magnitude(S).T).unsqueeze(0).to(torch.float32)
    model.eval()
    with torch.no_grad():
        masks = model(mag)
    return [istft(b, stft_cfg, len(w)) for b in apply_mask(masks, S)]


@dataclass
class ClipScore:
    clip_id: str
    si_sdr_noisy: float
    si_sdr_enhanced: float
    improvement: float
    seg_snr: float
    leak: list | None = None  # per-branch speech-leak fractions (3-output models)


@dataclass
class EvalReport:
    split: str
    checkpoint: str
    clips: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    mean_si_sdr: float = 0.0
    mean_improvement: float = 0.0
    mean_seg_snr: float = 0.0
    mean_leak: list | None = None

    @property
    def n_scored(self) -> int:
        return len(self.clips)

    @property
    def n_skipped(self) -> int:
        return len(self.skipped)

    def to_json(self) -> dict:
        d = asdict(self)
        d["n_scored"] = self.n_scored
        d["n_skipped"] = self.n_skipped
        return d


def evaluate(
    model: MaskNet | None,
    stft_cfg: StftConfig,
    manifest: CorpusManifest,
    split: str = "test",
    checkpoint_label: str = "",
    quiet: bool = True,
) -> EvalReport:
    """Score a model over one split; model=None scores the identity map.

    The identity map hands the noisy input back as its own enhancement, so
    its improvement is 0.0 exactly; it anchors the improvement scale.
    """
    loader = CorpusLoader(manifest)
    report = EvalReport(split=split, checkpoint=checkpoint_label)
    scores = []
    for entry in manifest.for_split(split):
        ex = loader.load(entry, for_eval=True)
        if ex.clean_ref is None:
            report.skipped.append(entry.clip_id)
            if not quiet:
                print(f"skipping {entry.clip_id}: no clean reference")
            continue
        noisy = ex.input
        if model is None:
            branches = [noisy]
        else:
            branches = enhance_clip(model, stft_cfg, noisy)
        enhanced = branches[0]
        sdr_in = si_sdr(noisy, ex.clean_ref)
        sdr_out = si_sdr(enhanced, ex.clean_ref)
        score = ClipScore(
            clip_id=entry.clip_id,
            si_sdr_noisy=sdr_in,
            si_sdr_enhanced=sdr_out,
            improvement=sdr_out - sdr_in,
            seg_snr=segmental_snr(enhanced, ex.clean_ref),
            leak=(
                [speech_leak(b, ex.clean_ref) for b in branches] if len(branches) == 3 else None
            ),
        )
        scores.append(score)
    report.clips = scores
    if scores:
        report.mean_si_sdr = float(np.mean([c.si_sdr_enhanced for c in scores]))
        report.mean_improvement = float(np.mean([c.improvement for c in scores]))
        report.mean_seg_snr = float(np.mean([c.seg_snr for c in scores]))
        if scores[0].leak is not None:
            report.mean_leak = [
                float(np.mean([c.leak[i] for c in scores])) for i in range(3)
            ]
    return report


def evaluate_checkpoint(path, manifest: CorpusManifest, split: str = "test") -> EvalReport:
    model, stft_cfg, _ = model_from_checkpoint(path)
    return evaluate(model, stft_cfg, manifest, split=split, checkpoint_label=str(path))


def render_table(report: EvalReport) -> str:
    """Aligned per-clip table plus a mean row."""
    headers = ["clip", "si_sdr_in", "si_sdr_out", "impr", "seg_snr"]
    has_leak = any(c.leak is not None for c in report.clips)
    if has_leak:
        headers += ["leak_x1", "leak_x2", "leak_x3"]
    rows = []
    for c in report.clips:
        row = [
            c.clip_id,
            f"{c.si_sdr_noisy:8.2f}",
            f"{c.si_sdr_enhanced:8.2f}",
            f"{c.improvement:8.2f}",
            f"{c.seg_snr:8.2f}",
        ]
        if has_leak:
            row += [f"{v:7.3f}" for v in (c.leak or [float('nan')] * 3)]
        rows.append(row)
    mean_row = [
        "MEAN",
        "",
        f"{report.mean_si_sdr:8.2f}",
        f"{report.mean_improvement:8.2f}",
        f"{report.mean_seg_snr:8.2f}",
    ]
    if has_leak and report.mean_leak:
        mean_row += [f"{v:7.3f}" for v in report.mean_leak]
    rows.append(mean_row)
    widths = [max(len(h), *(len(r[i]) if i < len(r) else 0 for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join((r[i] if i < len(r) else "").ljust(widths[i]) for i in range(len(headers))))
    if report.skipped:
        lines.append(f"skipped (no clean reference): {len(report.skipped)}")
    return "\n".join(lines)


def write_report(report: EvalReport, out_dir, csv_too: bool = True) -> None:
    os.makedirs(str(out_dir), exist_ok=True)
    path = os.path.join(str(out_dir), "report.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    os.replace(tmp, path)
    if not csv_too:
        return
    csv_path = os.path.join(str(out_dir), "report.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["clip_id", "si_sdr_noisy", "si_sdr_enhanced", "improvement", "seg_snr"]
        has_leak = any(c.leak is not None for c in report.clips)
        if has_leak:
            header += ["leak_x1", "leak_x2", "leak_x3"]
        writer.writerow(header)
        for c in report.clips:
            row = [c.clip_id, c.si_sdr_noisy, c.si_sdr_enhanced, c.improvement, c.seg_snr]
            if has_leak:
                row += list(c.leak) if c.leak else [""] * 3
            writer.writerow(row)
