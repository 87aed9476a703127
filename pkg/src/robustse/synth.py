"""Synthetic speech/noise clip generation.

Speech-like sources are sawtooth excitations with a slowly wandering pitch,
shaped by a couple of resonant peaks (crude formants) and a syllabic
amplitude envelope, so they are periodic and band-concentrated the way the
analysis code expects voiced audio to be. Noise comes in three families:
white, pink (spectrally shaped white noise), and "babble" (band-limited
noise with its own syllabic modulation). Clicks are short rectangular
bursts whose sign follows the underlying sample so the peak amplitude is
exactly the requested value.

All randomness flows through an explicit numpy Generator; same generator
state, same samples.
"""

from __future__ import annotations

import numpy as np
from scipy import signal as sps

from .dsp import Waveform
from .errors import ConfigError, DegenerateNoiseError

NOISE_FAMILIES = ("white", "pink", "babble")

SILENCE_FLOOR = 1e-5


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def median_window_peak(x: np.ndarray, sample_rate: int, window_ms: float = 4.0) -> float:
    """Median over the clip of per-window |sample| maxima.

    This is the reference level for crest-factor click detection, so the
    speech synthesizer normalizes against it rather than against RMS.
    """
    win = max(1, int(window_ms * sample_rate / 1000.0))
    n = (x.size // win) * win
    if n == 0:
        return float(np.max(np.abs(x))) if x.size else 0.0
    peaks = np.abs(x[:n]).reshape(-1, win).max(axis=1)
    return float(np.median(peaks))


def synth_speech(n_samples: int, sample_rate: int, rng: np.random.Generator) -> Waveform:
    """Voiced, formant-shaped, syllable-modulated source at RMS ~= 0.1."""
    if n_samples < 1:
        raise ConfigError(f"n_samples must be positive, got {n_samples}")
    t = np.arange(n_samples) / sample_rate

    # Pitch: random walk inside 80..300 Hz, low-pass smoothed.
    f0_base = rng.uniform(100.0, 220.0)
    walk = np.cumsum(rng.normal(0.0, 2.0, n_samples))
    walk -= np.linspace(0.0, walk[-1], n_samples)
    f0 = np.clip(f0_base + 0.05 * walk, 80.0, 300.0)
    phase = 2.0 * np.pi * np.cumsum(f0) / sample_rate
    # Sawtooth from wrapped phase: rich in harmonics.
    saw = 2.0 * ((phase / (2.0 * np.pi)) % 1.0) - 1.0

    # Two or three resonant peaks in the usual formant range.
    shaped = saw
    n_formants = int(rng.integers(2, 4))
    for _ in range(n_formants):
        fc = rng.uniform(300.0, 3200.0)
        q = rng.uniform(4.0, 10.0)
        b, a = sps.iirpeak(fc, q, fs=sample_rate)
        shaped = shaped + 2.0 * sps.lfilter(b, a, shaped)

    # Syllabic envelope around 3 Hz, never fully closing.
    syl_rate = rng.uniform(2.0, 4.5)
    env = 0.25 + 0.75 * 0.5 * (1.0 + np.sin(2.0 * np.pi * syl_rate * t + rng.uniform(0, 2 * np.pi)))
    x = shaped * env
    # Normalize the median short-window peak (not the RMS) so the contrast
    # between ordinary voiced peaks and click transients is the same for
    # every random formant draw. RMS lands near 0.05.
    x = x / max(median_window_peak(x, sample_rate), 1e-12) * 0.08
    return Waveform(samples=x, sample_rate=sample_rate)


def synth_noise(
    n_samples: int, sample_rate: int, family: str, rng: np.random.Generator
) -> Waveform:
    """Noise clip of the given family at RMS ~= 0.1."""
    if family not in NOISE_FAMILIES:
        raise ConfigError(f"unknown noise family {family!r}, expected one of {NOISE_FAMILIES}")
    if n_samples < 1:
        raise ConfigError(f"n_samples must be positive, got {n_samples}")
    white = rng.normal(0.0, 1.0, n_samples)
    if family == "white":
        x = white
    elif family == "pink":
        # One-pole-ish pinking filter; close enough to 1/f for our purposes.
        b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
        a = [1.0, -2.494956002, 2.017265875, -0.522189400]
        x = sps.lfilter(b, a, white)
    else:  # babble: band-limited noise with slow multi-band modulation
        sos = sps.butter(4, [200.0, 3800.0], btype="bandpass", fs=sample_rate, output="sos")
        x = sps.sosfilt(sos, white)
        t = np.arange(n_samples) / sample_rate
        env = np.ones(n_samples)
        for _ in range(3):
            rate = rng.uniform(1.5, 6.0)
            env += 0.5 * np.sin(2.0 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
        x = x * np.clip(env, 0.15, None)
    x = x / max(_rms(x), 1e-12) * 0.1
    return Waveform(samples=x, sample_rate=sample_rate)


def synth_silence(n_samples: int, sample_rate: int, rng: np.random.Generator) -> Waveform:
    """Near-digital silence: a tiny noise floor well under any speech."""
    x = rng.normal(0.0, SILENCE_FLOOR, n_samples)
    x = np.clip(x, -1e-4, 1e-4)
    return Waveform(samples=x, sample_rate=sample_rate)


def add_clicks(
    w: Waveform,
    events: list[tuple[float, float]],
    rng: np.random.Generator,
    min_ms: float = 2.0,
    max_ms: float = 10.0,
) -> Waveform:
    """Overlay a short rectangular burst at each (time s, amplitude) event.

    Burst duration is drawn in [min_ms, max_ms]. The burst's sign matches
    the underlying sample at its start and it replaces the samples it
    covers, so the clip peaks at exactly +-amplitude there.
    """
    x = w.samples.copy()
    n = x.size
    sr = w.sample_rate
    min_len = max(1, int(min_ms * sr / 1000.0))
    max_len = max(min_len, int(max_ms * sr / 1000.0))
    for time_s, amplitude in events:
        if amplitude < 0.0:
            raise ConfigError(f"click amplitude must be >= 0, got {amplitude}")
        start = int(round(time_s * sr))
        if not 0 <= start < n:
            raise ConfigError(f"click at {time_s} s falls outside the clip")
        length = int(rng.integers(min_len, max_len + 1))
        end = min(n, start + length)
        sign = 1.0 if x[start] >= 0.0 else -1.0
        x[start:end] = sign * amplitude
    return Waveform(samples=x, sample_rate=sr)


def mix_at_snr(signal: Waveform, noise: Waveform, snr_db: float) -> tuple[Waveform, Waveform]:
    """Scale noise so signal/noise power ratio hits snr_db; returns (mix, scaled noise)."""
    if signal.samples.size != noise.samples.size:
        raise ConfigError(
            f"signal ({signal.samples.size}) and noise ({noise.samples.size}) lengths differ"
        )
    e_sig = float(np.sum(np.square(signal.samples)))
    e_noise = float(np.sum(np.square(noise.samples)))
    if e_noise <= 0.0:
        raise DegenerateNoiseError("noise clip has zero energy")
    g = np.sqrt(e_sig / (e_noise * 10.0 ** (snr_db / 10.0)))
    scaled = Waveform(samples=g * noise.samples, sample_rate=noise.sample_rate)
    mix = Waveform(samples=signal.samples + scaled.samples, sample_rate=signal.sample_rate)
    return mix, scaled
