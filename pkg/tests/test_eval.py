import json

import numpy as np
import pytest

from robustse.data import CorpusManifest, CorpusRecipe, ManifestEntry, plan_corpus, write_wav
from robustse.dsp import StftConfig, Waveform
from robustse.errors import DegenerateNoiseError
from robustse.evaluate import (
    EvalReport,
    evaluate,
    render_table,
    segmental_snr,
    si_sdr,
    speech_leak,
    write_report,
)
from robustse.model import MaskNet, MaskNetConfig

from oracles import si_sdr_oracle

SR = 16000


def wf(x):
    return Waveform(samples=np.asarray(x, dtype=np.float64))


def orthogonalize(v, s):
    return v - (np.dot(v, s) / np.dot(s, s)) * s


# -------------------------------------------------------------------- si_sdr


def test_si_sdr_perfect_estimate_hits_upper_clamp(rng):
    s = wf(rng.standard_normal(2000))
    assert si_sdr(s, s) == 60.0
    scaled = wf(2.5 * s.samples)
    assert si_sdr(scaled, s) == 60.0  # scale-invariant: error energy is zero


def test_si_sdr_orthogonal_estimate_hits_lower_clamp(rng):
    s = rng.standard_normal(2000)
    v = orthogonalize(rng.standard_normal(2000), s)
    assert si_sdr(wf(v), wf(s)) == -60.0


def test_si_sdr_known_ratio(rng):
    s = rng.standard_normal(4000)
    n = orthogonalize(rng.standard_normal(4000), s)
    n *= np.sqrt(np.dot(s, s) / np.dot(n, n)) / 10.0  # error energy = signal/100
    got = si_sdr(wf(s + n), wf(s))
    assert got == pytest.approx(20.0, abs=1e-9)


def test_si_sdr_matches_oracle(rng):
    for _ in range(25):
        s = rng.standard_normal(500)
        e = s + 0.3 * rng.standard_normal(500)
        assert si_sdr(wf(e), wf(s)) == pytest.approx(si_sdr_oracle(e, s), abs=1e-10)


def test_si_sdr_validation(rng):
    with pytest.raises(ValueError):
        si_sdr(wf(np.ones(5)), wf(np.ones(6)))
    with pytest.raises(DegenerateNoiseError):
        si_sdr(wf(rng.standard_normal(10)), wf(np.zeros(10)))


# ------------------------------------------------------------ segmental SNR


def test_seg_snr_perfect_estimate_is_upper_clamp(rng):
    s = wf(rng.standard_normal(SR))
    assert segmental_snr(s, s) == 35.0


def test_seg_snr_sign_flip(rng):
    s = wf(rng.standard_normal(SR))
    flipped = wf(-s.samples)
    assert segmental_snr(flipped, s) == pytest.approx(10 * np.log10(0.25), abs=1e-6)


def test_seg_snr_lower_clamp(rng):
    s = wf(0.5 * rng.standard_normal(SR))
    est = wf(s.samples + 100.0 * rng.standard_normal(SR))
    assert segmental_snr(est, s) == -10.0


def test_seg_snr_length_mismatch():
    with pytest.raises(ValueError):
        segmental_snr(wf(np.ones(100)), wf(np.ones(101)))


# -------------------------------------------------------------- speech leak


def test_speech_leak_bounds(rng):
    s = wf(rng.standard_normal(1000))
    assert speech_leak(s, s) == pytest.approx(1.0, abs=1e-12)
    assert speech_leak(wf(3.0 * s.samples), s) == pytest.approx(1.0, abs=1e-12)
    assert speech_leak(wf(np.zeros(1000)), s) == 0.0
    orth = wf(orthogonalize(rng.standard_normal(1000), s.samples))
    assert speech_leak(orth, s) == pytest.approx(0.0, abs=1e-12)


# ---------------------------------------------------------------- evaluate


RECIPE = CorpusRecipe(
    n_clips=8,
    duration_s=0.6,
    seed=13,
    split_fractions=(0.5, 0.25, 0.25),
    pure_noise_rate=0.0,
    silence_rate=0.0,
    click_rate=0.0,
)


@pytest.fixture(scope="module")
def manifest():
    return plan_corpus(RECIPE)


def test_identity_model_improvement_is_zero(manifest):
    report = evaluate(None, StftConfig(), manifest, split="test")
    assert report.n_scored == len(manifest.for_split("test"))
    assert report.n_skipped == 0
    for c in report.clips:
        assert c.improvement == 0.0
        assert c.si_sdr_enhanced == c.si_sdr_noisy
    assert report.mean_improvement == 0.0


def test_evaluate_untrained_single_output(manifest):
    cfg = StftConfig()
    model = MaskNet(MaskNetConfig(n_freq=cfg.n_freq, bottleneck=8))
    report = evaluate(model, cfg, manifest, split="test")
    assert report.n_scored > 0
    for c in report.clips:
        assert np.isfinite(c.improvement)
        assert c.leak is None
    assert report.mean_leak is None


def test_evaluate_three_output_reports_leak(manifest):
    cfg = StftConfig()
    model = MaskNet(MaskNetConfig(n_freq=cfg.n_freq, bottleneck=8, n_outputs=3))
    report = evaluate(model, cfg, manifest, split="test")
    for c in report.clips:
        assert len(c.leak) == 3
        assert all(0.0 <= v <= 1.0 for v in c.leak)
    assert len(report.mean_leak) == 3

    table = render_table(report)
    assert "leak_x1" in table and "leak_x3" in table
    assert "MEAN" in table
    for c in report.clips:
        assert c.clip_id in table


def test_evaluate_skips_clips_without_clean_reference(tmp_path, rng):
    wav = tmp_path / "raw.wav"
    write_wav(wav, Waveform(samples=0.1 * rng.standard_normal(SR)))
    manifest = CorpusManifest(
        sample_rate=SR,
        entries=[ManifestEntry(clip_id="raw0", split="test", path="raw.wav")],
        root=str(tmp_path),
    )
    report = evaluate(None, StftConfig(), manifest, split="test")
    assert report.n_scored == 0
    assert report.skipped == ["raw0"]
    assert "skipped" in render_table(report)


def test_write_report_files(tmp_path, manifest):
    report = evaluate(None, StftConfig(), manifest, split="test")
    write_report(report, tmp_path)
    with open(tmp_path / "report.json") as fh:
        d = json.load(fh)
    assert d["n_scored"] == report.n_scored
    assert d["split"] == "test"
    assert len(d["clips"]) == report.n_scored
    csv_text = (tmp_path / "report.csv").read_text().splitlines()
    assert csv_text[0].startswith("clip_id,")
    assert len(csv_text) == 1 + report.n_scored


def test_render_table_alignment(manifest):
    report = evaluate(None, StftConfig(), manifest, split="test")
    lines = render_table(report).splitlines()
    assert len({len(ln) for ln in lines[:2]}) == 1  # header and rule align
    assert lines[1].replace("-", "").replace(" ", "") == ""


def test_eval_report_counts():
    r = EvalReport(split="test", checkpoint="x")
    assert r.n_scored == 0 and r.n_skipped == 0
