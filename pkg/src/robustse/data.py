"""Corpus synthesis, manifests, loading, batching, and heuristic triage.

A corpus is a directory holding `manifest.jsonl` plus one PCM16 mono WAV
per clip (the possibly degraded target channel). The manifest's first line
is a schema header; each following line describes one clip, normally with
the full synthesis recipe so the loader can regenerate every channel at
float precision. Entries may instead point at an external WAV, in which
case only the target channel exists.

Clip categories:

* CLEAN: target is the synthetic voice alone.
* NOISY_SPEECH: recording noise is mixed into the target at a chosen SNR.
* PURE_NOISE: no voice at all, target is a noise clip.
* SILENCE: target is a near-digital-silence floor.

Click transients are an orthogonal overlay tracked in `click_events`, so a
CLEAN-category clip may still carry clicks. Every clip also names a
"mixture" noise source: the loader adds that noise to the target to form
the network input, and supplies an independent clip of the same family as
the noise-only channel for mixture-invariant training.

The analyzer works from the WAV files alone (no recipe peeking): silence
by RMS threshold, voiced-vs-noise by a high-passed autocorrelation peak
vote over short windows, clicks by short-window crest factor against 8x
the clip's median window peak.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

from .dsp import Waveform
from .errors import ConfigError, ManifestError, RecipeError, ShapeError
from .synth import (
    NOISE_FAMILIES,
    add_clicks,
    median_window_peak,
    mix_at_snr,
    synth_noise,
    synth_silence,
    synth_speech,
)

MANIFEST_SCHEMA = "robustse-corpus-v1"
MANIFEST_NAME = "manifest.jsonl"

CATEGORIES = ("CLEAN", "NOISY_SPEECH", "PURE_NOISE", "SILENCE")
SPLITS = ("train", "valid", "test")

SPEECH_SOURCE = "synth:voice"

# Nominal RMS a synthetic voice lands at; used to place mixture noise under
# clips whose own target is (near) silent.
NOMINAL_SPEECH_RMS = 0.05


# ---------------------------------------------------------------------------
# Recipes and per-clip specs


@dataclass(frozen=True)
class MixSpec:
    """Everything needed to deterministically regenerate one clip."""

    category: str
    duration_s: float
    seed: int
    speech_source: str | None = SPEECH_SOURCE
    recording_noise_source: str | None = None
    recording_snr_db: float | None = None
    click_events: tuple[tuple[float, float], ...] = ()
    mixture_noise_source: str = "synth:white"
    mixture_snr_db: float = 5.0
    # Level of the standalone noise-only clip, as an SNR against the nominal
    # speech level. None pins it to the in-mixture noise level instead.
    noise_only_snr_db: float | None = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise RecipeError(f"unknown category {self.category!r}")
        if self.duration_s <= 0:
            raise RecipeError(f"duration_s must be positive, got {self.duration_s}")
        if self.category in ("PURE_NOISE", "SILENCE") and self.speech_source is not None:
            raise RecipeError(f"{self.category} clips must not have a speech source")
        if self.category == "PURE_NOISE" and self.recording_noise_source is None:
            raise RecipeError("PURE_NOISE clips need a recording noise source")
        if self.recording_noise_source is not None and self.recording_snr_db is None:
            if self.category != "PURE_NOISE":
                raise RecipeError("recording noise without an SNR")

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "speech_source": self.speech_source,
            "recording_noise_source": self.recording_noise_source,
            "recording_snr_db": self.recording_snr_db,
            "click_events": [list(e) for e in self.click_events],
            "mixture_noise_source": self.mixture_noise_source,
            "mixture_snr_db": self.mixture_snr_db,
            "noise_only_snr_db": self.noise_only_snr_db,
        }

    @staticmethod
    def from_dict(d: dict) -> "MixSpec":
        try:
            return MixSpec(
                category=d["category"],
                duration_s=float(d["duration_s"]),
                seed=int(d["seed"]),
                speech_source=d.get("speech_source"),
                recording_noise_source=d.get("recording_noise_source"),
                recording_snr_db=(
                    None if d.get("recording_snr_db") is None else float(d["recording_snr_db"])
                ),
                click_events=tuple((float(t), float(a)) for t, a in d.get("click_events", [])),
                mixture_noise_source=d.get("mixture_noise_source", "synth:white"),
                mixture_snr_db=float(d.get("mixture_snr_db", 5.0)),
                noise_only_snr_db=(
                    None
                    if d.get("noise_only_snr_db") is None
                    else float(d["noise_only_snr_db"])
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"bad clip spec: {exc}") from exc


@dataclass(frozen=True)
class CorpusRecipe:
    """Corpus-level knobs; category rates apply to train and valid splits.

    The test split is always CLEAN so evaluation scores are measured
    against trustworthy references.
    """

    n_clips: int = 60
    duration_s: float = 2.0
    sample_rate: int = 16000
    seed: int = 0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    noisy_rate: float = 0.3
    pure_noise_rate: float = 0.05
    silence_rate: float = 0.07
    click_rate: float = 0.1
    clicks_per_clip: tuple[int, int] = (2, 5)
    click_amplitude: tuple[float, float] = (0.85, 0.98)
    recording_noise_family: str = "random"
    recording_snr_db: tuple[float, float] = (0.0, 10.0)
    mixture_noise_family: str = "random"
    mixture_snr_db: tuple[float, float] = (0.0, 10.0)

    def __post_init__(self):
        if self.n_clips < 1:
            raise RecipeError(f"n_clips must be positive, got {self.n_clips}")
        rates = (self.noisy_rate, self.pure_noise_rate, self.silence_rate, self.click_rate)
        if any(r < 0 or r > 1 for r in rates):
            raise RecipeError(f"category rates must lie in [0, 1], got {rates}")
        if self.noisy_rate + self.pure_noise_rate + self.silence_rate > 1.0 + 1e-9:
            raise RecipeError("noisy + pure-noise + silence rates exceed 1")
        if abs(sum(self.split_fractions) - 1.0) > 1e-6:
            raise RecipeError(f"split fractions must sum to 1, got {self.split_fractions}")
        for fam_field in (self.recording_noise_family, self.mixture_noise_family):
            if fam_field not in NOISE_FAMILIES and fam_field != "random":
                raise RecipeError(f"unknown noise family {fam_field!r}")


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    split: str
    spec: MixSpec | None = None
    path: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r} for {self.clip_id}")
        if self.spec is None and self.path is None:
            raise ManifestError(f"entry {self.clip_id} has neither a spec nor a path")


@dataclass
class CorpusManifest:
    sample_rate: int
    entries: list[ManifestEntry]
    root: str | None = None

    def __post_init__(self):
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate clip ids in manifest")

    def for_split(self, split: str) -> list[ManifestEntry]:
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]


@dataclass
class TrainingExample:
    """Aligned channels for one clip.

    `input` is what the network sees, `target` is the (possibly degraded)
    training reference, `noise_only` is an independent noise clip of the
    input's mixture family, and `clean_ref` is the uncontaminated voice.
    The loader withholds `clean_ref` unless asked for evaluation data, and
    training batches have no slot for it at all.
    """

    clip_id: str
    input: Waveform
    target: Waveform
    noise_only: Waveform | None = None
    clean_ref: Waveform | None = None
    mixture_family: str = "white"

    def __post_init__(self):
        n, sr = self.input.samples.size, self.input.sample_rate
        for name in ("target", "noise_only", "clean_ref"):
            w = getattr(self, name)
            if w is None:
                continue
            if w.samples.size != n or w.sample_rate != sr:
                raise ShapeError(f"{name} misaligned with input for clip {self.clip_id}")


# ---------------------------------------------------------------------------
# WAV I/O (PCM16 mono, no resampling)


def write_wav(path, w: Waveform) -> None:
    x = np.clip(w.samples, -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype(np.int16)
    wavfile.write(str(path), w.sample_rate, pcm)


def read_wav(path, expect_sample_rate: int | None = None) -> Waveform:
    try:
        sr, data = wavfile.read(str(path))
    except (OSError, ValueError) as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    if data.ndim != 1:
        raise ManifestError(f"{path} is not mono (shape {data.shape})")
    if expect_sample_rate is not None and sr != expect_sample_rate:
        raise ManifestError(
            f"{path} has sample rate {sr}, manifest says {expect_sample_rate}; "
            "resampling is not done implicitly"
        )
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32767.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ManifestError(f"{path} has unsupported sample format {data.dtype}")
    return Waveform(samples=x, sample_rate=int(sr))


# ---------------------------------------------------------------------------
# Clip synthesis


def _parse_source(ref: str) -> tuple[str, str]:
    if ":" not in ref:
        raise ManifestError(f"bad source reference {ref!r}")
    kind, _, name = ref.partition(":")
    if kind == "synth" and (name == "voice" or name in NOISE_FAMILIES):
        return kind, name
    if kind == "file" and name:
        return kind, name
    raise ManifestError(f"unknown source reference {ref!r}")


def _render_source(ref: str, n: int, sr: int, rng: np.random.Generator) -> Waveform:
    kind, name = _parse_source(ref)
    if kind == "file":
        w = read_wav(name, expect_sample_rate=sr)
        if w.samples.size < n:
            raise ManifestError(f"source file {name} shorter than the clip")
        return Waveform(samples=w.samples[:n], sample_rate=sr)
    if name == "voice":
        return synth_speech(n, sr, rng)
    return synth_noise(n, sr, name, rng)


def synth_clip(
    spec: MixSpec, sample_rate: int, clip_id: str = "clip", include_clean_ref: bool = True
) -> TrainingExample:
    """Render all channels of one clip, fully determined by spec.seed.

    Each channel draws from its own seed-derived stream so that, for
    example, an extra click event never perturbs the mixture noise.
    """
    n = int(round(spec.duration_s * sample_rate))
    streams = {
        name: np.random.default_rng([spec.seed, salt])
        for salt, name in enumerate(
            ("speech", "rec_noise", "clicks", "mix_noise", "noise_only"), start=1
        )
    }

    clean = None
    if spec.category == "SILENCE":
        target = synth_silence(n, sample_rate, streams["speech"])
    elif spec.category == "PURE_NOISE":
        target = _render_source(spec.recording_noise_source, n, sample_rate, streams["rec_noise"])
    else:
        clean = _render_source(spec.speech_source, n, sample_rate, streams["speech"])
        target = clean
        if spec.recording_noise_source is not None:
            rec = _render_source(
                spec.recording_noise_source, n, sample_rate, streams["rec_noise"]
            )
            target, _ = mix_at_snr(clean, rec, spec.recording_snr_db)
    if spec.click_events:
        target = add_clicks(target, list(spec.click_events), streams["clicks"])

    _, fam = _parse_source(spec.mixture_noise_source)
    mix_noise = _render_source(spec.mixture_noise_source, n, sample_rate, streams["mix_noise"])
    noise_only = _render_source(spec.mixture_noise_source, n, sample_rate, streams["noise_only"])

    e_target = float(np.sum(np.square(target.samples)))
    if e_target / n > (10.0 * 1e-4) ** 2:
        mixed, scaled = mix_at_snr(target, mix_noise, spec.mixture_snr_db)
        noise_rms = float(np.sqrt(np.mean(np.square(scaled.samples))))
    else:
        # Near-silent target: pin the mixture noise against the nominal
        # speech level instead of scaling it down to nothing.
        noise_rms = NOMINAL_SPEECH_RMS * 10.0 ** (-spec.mixture_snr_db / 20.0)
        cur = float(np.sqrt(np.mean(np.square(mix_noise.samples))))
        scaled = Waveform(samples=mix_noise.samples * (noise_rms / cur), sample_rate=sample_rate)
        mixed = Waveform(samples=target.samples + scaled.samples, sample_rate=sample_rate)

    cur = float(np.sqrt(np.mean(np.square(noise_only.samples))))
    noise_only = Waveform(
        samples=noise_only.samples * (noise_rms / max(cur, 1e-12)), sample_rate=sample_rate
    )

    return TrainingExample(
        clip_id=clip_id,
        input=mixed,
        target=target,
        noise_only=noise_only,
        clean_ref=clean if include_clean_ref else None,
        mixture_family=fam if fam in NOISE_FAMILIES else "white",
    )


# ---------------------------------------------------------------------------
# Corpus building


def _draw_family(choice: str, rng: np.random.Generator) -> str:
    if choice == "random":
        return str(rng.choice(list(NOISE_FAMILIES)))
    return choice


def _split_counts(n: int, fractions: tuple[float, float, float]) -> list[int]:
    counts = [int(np.floor(f * n)) for f in fractions]
    # Hand leftovers out in declaration order (train first).
    i = 0
    while sum(counts) < n:
        counts[i % 3] += 1
        i += 1
    return counts


def _draw_click_events(
    duration_s: float, count: int, amp_range: tuple[float, float], rng: np.random.Generator
) -> tuple[tuple[float, float], ...]:
    # Keep clicks at least 60 ms apart and off the clip edges so the
    # analyzer sees them as distinct events.
    lo, hi = 0.05, max(0.06, duration_s - 0.05)
    for _ in range(200):
        times = np.sort(rng.uniform(lo, hi, count))
        if count < 2 or np.min(np.diff(times)) >= 0.06:
            break
    amps = rng.uniform(amp_range[0], amp_range[1], count)
    return tuple((float(t), float(a)) for t, a in zip(times, amps))


def plan_corpus(recipe: CorpusRecipe) -> CorpusManifest:
    """Draw all per-clip specs for a recipe without touching the disk.

    Category counts per rate are exact up to rounding (round(rate * n) over
    the train+valid pool); the test split is always CLEAN. The same recipe
    always yields the same plan.
    """
    rng = np.random.default_rng(recipe.seed)
    n = recipe.n_clips
    n_train, n_valid, n_test = _split_counts(n, recipe.split_fractions)
    splits = ["train"] * n_train + ["valid"] * n_valid + ["test"] * n_test

    tv_indices = [i for i, s in enumerate(splits) if s != "test"]
    rng.shuffle(tv_indices)
    n_tv = len(tv_indices)
    n_silence = int(round(recipe.silence_rate * n_tv))
    n_pure = int(round(recipe.pure_noise_rate * n_tv))
    n_noisy = int(round(recipe.noisy_rate * n_tv))
    if n_silence + n_pure + n_noisy > n_tv:
        raise RecipeError(
            f"rates ask for {n_silence + n_pure + n_noisy} special clips "
            f"but only {n_tv} train/valid clips exist"
        )
    categories = {i: "CLEAN" for i in range(n)}
    cursor = 0
    for count, cat in ((n_silence, "SILENCE"), (n_pure, "PURE_NOISE"), (n_noisy, "NOISY_SPEECH")):
        for i in tv_indices[cursor : cursor + count]:
            categories[i] = cat
        cursor += count
    clean_tv = [i for i in tv_indices[cursor:]]
    n_click = min(int(round(recipe.click_rate * n_tv)), len(clean_tv))
    click_indices = set(clean_tv[:n_click])

    entries = []
    for i in range(n):
        cat = categories[i]
        clip_seed = int(rng.integers(0, 2**31 - 1))
        kwargs = dict(
            category=cat,
            duration_s=recipe.duration_s,
            seed=clip_seed,
            mixture_noise_source="synth:" + _draw_family(recipe.mixture_noise_family, rng),
            mixture_snr_db=float(rng.uniform(*recipe.mixture_snr_db)),
        )
        if cat in ("PURE_NOISE", "SILENCE"):
            kwargs["speech_source"] = None
        if cat == "PURE_NOISE":
            kwargs["recording_noise_source"] = "synth:" + _draw_family(
                recipe.recording_noise_family, rng
            )
        if cat == "NOISY_SPEECH":
            kwargs["recording_noise_source"] = "synth:" + _draw_family(
                recipe.recording_noise_family, rng
            )
            kwargs["recording_snr_db"] = float(rng.uniform(*recipe.recording_snr_db))
        if i in click_indices:
            count = int(rng.integers(recipe.clicks_per_clip[0], recipe.clicks_per_clip[1] + 1))
            kwargs["click_events"] = _draw_click_events(
                recipe.duration_s, count, recipe.click_amplitude, rng
            )
        entries.append(
            ManifestEntry(
                clip_id=f"clip_{i:04d}",
                split=splits[i],
                spec=MixSpec(**kwargs),
                path=os.path.join("wav", f"clip_{i:04d}.wav"),
            )
        )
    return CorpusManifest(sample_rate=recipe.sample_rate, entries=entries)


def build_corpus(out_dir, recipe: CorpusRecipe) -> CorpusManifest:
    """Plan a corpus, write its WAVs and manifest.jsonl, return the manifest.

    The same recipe and seed always produce the same bytes on disk.
    """
    manifest = plan_corpus(recipe)
    out_dir = str(out_dir)
    os.makedirs(os.path.join(out_dir, "wav"), exist_ok=True)
    for entry in manifest.entries:
        ex = synth_clip(entry.spec, recipe.sample_rate, clip_id=entry.clip_id)
        write_wav(os.path.join(out_dir, entry.path), ex.target)
    manifest.root = out_dir
    save_manifest(os.path.join(out_dir, MANIFEST_NAME), manifest)
    return manifest


def manifest_lines(manifest: CorpusManifest) -> list[str]:
    lines = [
        json.dumps(
            {
                "schema": MANIFEST_SCHEMA,
                "sample_rate": manifest.sample_rate,
                "n_clips": len(manifest.entries),
            },
            sort_keys=True,
        )
    ]
    for e in manifest.entries:
        rec = {"clip_id": e.clip_id, "split": e.split, "path": e.path}
        if e.spec is not None:
            rec["spec"] = e.spec.to_dict()
        lines.append(json.dumps(rec, sort_keys=True))
    return lines


def save_manifest(path, manifest: CorpusManifest) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(manifest_lines(manifest)) + "\n")
    os.replace(tmp, str(path))


def load_manifest(path) -> CorpusManifest:
    path = str(path)
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise ManifestError(f"manifest {path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} line 1 is not JSON: {exc}") from exc
    if header.get("schema") != MANIFEST_SCHEMA:
        raise ManifestError(
            f"manifest schema {header.get('schema')!r} unsupported, expected {MANIFEST_SCHEMA!r}"
        )
    entries = []
    for lineno, ln in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest {path} line {lineno} is not JSON: {exc}") from exc
        spec = MixSpec.from_dict(rec["spec"]) if "spec" in rec else None
        entries.append(
            ManifestEntry(
                clip_id=rec["clip_id"], split=rec["split"], spec=spec, path=rec.get("path")
            )
        )
    return CorpusManifest(
        sample_rate=int(header["sample_rate"]), entries=entries, root=os.path.dirname(path)
    )


# ---------------------------------------------------------------------------
# Loading and batching


class CorpusLoader:
    """Turns manifest entries into aligned waveform channels.

    Spec-backed entries are re-synthesized at float precision; path-only
    entries fall back to the stored WAV as both input and target (no
    synthetic channels available for them).
    """

    def __init__(self, manifest: CorpusManifest):
        self.manifest = manifest

    def load(self, entry: ManifestEntry, for_eval: bool = False) -> TrainingExample:
        sr = self.manifest.sample_rate
        if entry.spec is not None:
            return synth_clip(entry.spec, sr, clip_id=entry.clip_id, include_clean_ref=for_eval)
        path = entry.path
        if self.manifest.root and not os.path.isabs(path):
            path = os.path.join(self.manifest.root, path)
        w = read_wav(path, expect_sample_rate=sr)
        return TrainingExample(clip_id=entry.clip_id, input=w, target=w)

    def load_split(self, split: str, for_eval: bool = False) -> list[TrainingExample]:
        return [self.load(e, for_eval=for_eval) for e in self.manifest.for_split(split)]


@dataclass
class Batch:
    """Time-domain training batch; no clean-reference slot by design."""

    clip_ids: list[str]
    input: np.ndarray  # (K, n_samples)
    target: np.ndarray  # (K, n_samples)
    noise: np.ndarray | None  # (K, n_samples) for mixture-invariant schemes
    mixture_families: list[str]
    padded: np.ndarray  # (K,) bool, True where the clip was shorter than the segment


def _crop_or_pad(x: np.ndarray, start: int, seg: int) -> tuple[np.ndarray, bool]:
    if x.size >= seg:
        return x[start : start + seg], False
    out = np.zeros(seg, dtype=x.dtype)
    out[: x.size] = x
    return out, True


def iter_batches(
    loader: CorpusLoader,
    split: str,
    batch_size: int,
    segment_s: float,
    rng: np.random.Generator,
    need_noise: bool = False,
    crops_per_clip: int = 1,
):
    """Yield Batches covering each clip of the split `crops_per_clip` times
    per epoch (a fresh shuffle and fresh crop offsets for each pass).

    Crop offsets are drawn per clip from `rng`, so one Generator fully
    determines the epoch. Clips shorter than the segment are zero-padded
    and flagged.
    """
    entries = loader.manifest.for_split(split)
    if not entries:
        raise ManifestError(f"split {split!r} is empty")
    if crops_per_clip < 1:
        raise ConfigError(f"crops_per_clip must be >= 1, got {crops_per_clip}")
    seg = int(round(segment_s * loader.manifest.sample_rate))
    order = np.concatenate([rng.permutation(len(entries)) for _ in range(crops_per_clip)])
    for k0 in range(0, len(order), batch_size):
        chunk = [entries[i] for i in order[k0 : k0 + batch_size]]
        examples = [loader.load(e) for e in chunk]
        inputs, targets, noises, padded = [], [], [], []
        for ex in examples:
            n = ex.input.samples.size
            start = int(rng.integers(0, n - seg + 1)) if n > seg else 0
            xi, flag = _crop_or_pad(ex.input.samples, start, seg)
            ti, _ = _crop_or_pad(ex.target.samples, start, seg)
            inputs.append(xi)
            targets.append(ti)
            padded.append(flag)
            if need_noise:
                if ex.noise_only is None:
                    raise ManifestError(
                        f"clip {ex.clip_id} has no noise channel but the scheme needs one"
                    )
                ni, _ = _crop_or_pad(ex.noise_only.samples, start, seg)
                noises.append(ni)
        yield Batch(
            clip_ids=[ex.clip_id for ex in examples],
            input=np.stack(inputs),
            target=np.stack(targets),
            noise=np.stack(noises) if need_noise else None,
            mixture_families=[ex.mixture_family for ex in examples],
            padded=np.array(padded, dtype=bool),
        )


# ---------------------------------------------------------------------------
# Heuristic corpus triage


@dataclass(frozen=True)
class AnalysisThresholds:
    silence_rms: float = 1e-3
    click_level_multiplier: float = 8.0
    click_window_ms: float = 4.0
    click_hop_ms: float = 2.0
    voiced_acf_peak: float = 0.3
    voiced_fraction: float = 0.15
    acf_window_s: float = 0.064
    pitch_range_hz: tuple[float, float] = (60.0, 400.0)


@dataclass
class ClipReport:
    clip_id: str
    split: str
    category: str | None  # declared category if the manifest knows it
    silence: bool = False
    pure_noise: bool = False
    click_count: int = 0
    est_snr_db: float | None = None
    error: str | None = None


def _acf_peak(x: np.ndarray, sr: int, lo_hz: float, hi_hz: float) -> float:
    x = x - x.mean()
    r = np.correlate(x, x, mode="full")[x.size - 1 :]
    if r[0] <= 0:
        return 0.0
    r = r / r[0]
    lo = int(sr / hi_hz)
    hi = min(int(sr / lo_hz), x.size - 1)
    if hi <= lo:
        return 0.0
    return float(r[lo : hi + 1].max())


def _voiced_fraction(x: np.ndarray, sr: int, th: AnalysisThresholds) -> float:
    # Pink-ish noise keeps a heavy low-frequency autocorrelation tail, so
    # high-pass before looking for pitch-range periodicity.
    sos = sps.butter(4, 150.0, btype="highpass", fs=sr, output="sos")
    x = sps.sosfilt(sos, x)
    win = int(th.acf_window_s * sr)
    if x.size < win:
        return 0.0
    vals = [
        _acf_peak(x[k : k + win], sr, *th.pitch_range_hz)
        for k in range(0, x.size - win + 1, win)
    ]
    return float(np.mean(np.asarray(vals) > th.voiced_acf_peak))


def _count_clicks(x: np.ndarray, sr: int, th: AnalysisThresholds) -> int:
    win = max(1, int(th.click_window_ms * sr / 1000.0))
    hop = max(1, int(th.click_hop_ms * sr / 1000.0))
    starts = range(0, max(1, x.size - win + 1), hop)
    peaks = np.array([np.abs(x[s : s + win]).max() for s in starts])
    level = np.median(peaks)
    if level <= 0:
        return 0
    hot = peaks > th.click_level_multiplier * level
    events = 0
    run = 0
    cold = 0
    for h in hot:
        if h:
            if run == 0:
                events += 1
            run += 1
            cold = 0
        elif run:
            cold += 1
            if cold > 2:
                run = 0
    return events


def _estimate_snr_db(x: np.ndarray, sr: int) -> float:
    # Quietest-decile windows approximate the noise floor.
    win = int(0.032 * sr)
    n = (x.size // win) * win
    if n == 0:
        return 0.0
    powers = np.square(x[:n]).reshape(-1, win).mean(axis=1)
    powers = np.sort(powers)
    floor = float(np.mean(powers[: max(1, powers.size // 10)]))
    total = float(np.mean(powers))
    if floor <= 0:
        return 99.0
    return float(np.clip(10.0 * np.log10(max(total - floor, 1e-12) / floor), -20.0, 99.0))


def analyze_wav(w: Waveform, th: AnalysisThresholds | None = None) -> dict:
    """Blind per-clip triage of a target channel."""
    th = th or AnalysisThresholds()
    x = w.samples
    sr = w.sample_rate
    rms = float(np.sqrt(np.mean(np.square(x))))
    silence = rms < th.silence_rms
    clicks = 0 if silence else _count_clicks(x, sr, th)
    pure_noise = False
    if not silence:
        pure_noise = _voiced_fraction(x, sr, th) < th.voiced_fraction
    est = None if silence else _estimate_snr_db(x, sr)
    return {
        "silence": silence,
        "pure_noise": pure_noise,
        "click_count": clicks,
        "est_snr_db": est,
    }


def analyze_corpus(
    manifest: CorpusManifest, thresholds: AnalysisThresholds | None = None
) -> list[ClipReport]:
    """Per-clip reports from the WAV files; unreadable clips get error rows."""
    th = thresholds or AnalysisThresholds()
    reports = []
    for e in manifest.entries:
        category = e.spec.category if e.spec is not None else None
        report = ClipReport(clip_id=e.clip_id, split=e.split, category=category)
        path = e.path
        if path is None:
            report.error = "no audio file"
            reports.append(report)
            continue
        if manifest.root and not os.path.isabs(path):
            path = os.path.join(manifest.root, path)
        try:
            w = read_wav(path, expect_sample_rate=manifest.sample_rate)
            found = analyze_wav(w, th)
        except (ManifestError, ValueError) as exc:
            report.error = str(exc)
            reports.append(report)
            continue
        report.silence = found["silence"]
        report.pure_noise = found["pure_noise"]
        report.click_count = found["click_count"]
        report.est_snr_db = found["est_snr_db"]
        reports.append(report)
    return reports
