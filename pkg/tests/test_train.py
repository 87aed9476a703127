import json
import os

import numpy as np
import pytest
import torch

from robustse.config import apply_overrides, from_dict
from robustse.data import plan_corpus
from robustse.errors import CheckpointError, ConfigError
from robustse.model import load_checkpoint
from robustse.train import (
    EarlyStopper,
    RunRecord,
    read_run_record,
    resolve_n_outputs,
    train,
)


def make_cfg(**train_kw):
    return from_dict(
        {
            "data": {
                "n_clips": 10,
                "duration_s": 0.6,
                "seed": 7,
                "split_fractions": [0.6, 0.2, 0.2],
                "pure_noise_rate": 0.0,
                "silence_rate": 0.0,
                "click_rate": 0.0,
            },
            "model": {"bottleneck": 8},
            "train": {
                "batch_size": 4,
                "segment_s": 0.3,
                "epochs": 4,
                "early_stop_patience": 3,
                **train_kw,
            },
        }
    )


@pytest.fixture(scope="module")
def manifest():
    # spec-backed entries are synthesized on demand, no WAVs needed
    return plan_corpus(make_cfg().data)


def read_metrics(run_dir):
    with open(os.path.join(run_dir, "metrics.jsonl")) as fh:
        return [json.loads(ln) for ln in fh.read().splitlines() if ln.strip()]


# ---------------------------------------------------------------- stopper


def test_early_stopper_verdicts():
    st = EarlyStopper(patience=2)
    assert st.update(1, 5.0) == "improved"
    assert st.update(2, 4.0) == "improved"
    assert st.update(3, 4.5) == "wait"
    assert st.update(4, 4.2) == "stop"  # not below best, second strike
    assert st.best == 4.0
    assert st.best_epoch == 2


def test_early_stopper_counter_resets_on_improvement():
    st = EarlyStopper(patience=2)
    st.update(1, 5.0)
    st.update(2, 6.0)
    assert st.update(3, 4.0) == "improved"
    assert st.waited == 0
    assert st.update(4, 4.1) == "wait"


def test_early_stopper_equal_value_is_not_improvement():
    st = EarlyStopper(patience=1)
    st.update(1, 3.0)
    assert st.update(2, 3.0) == "stop"


def test_early_stopper_rejects_zero_patience():
    with pytest.raises(ConfigError):
        EarlyStopper(patience=0)


def test_resolve_n_outputs():
    assert resolve_n_outputs("traditional", None) == 1
    assert resolve_n_outputs("mixit", None) == 3
    assert resolve_n_outputs("mixit_aug", 3) == 3
    with pytest.raises(ConfigError):
        resolve_n_outputs("traditional", 3)
    with pytest.raises(ConfigError):
        resolve_n_outputs("mixit", 1)


# ---------------------------------------------------------------- training


def test_run_dir_layout_and_record(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1)
    rec = train(cfg, manifest, tmp_path / "run", quiet=True)
    run = tmp_path / "run"
    for name in ("config.snapshot", "metrics.jsonl", "timings.jsonl", "run_record.json"):
        assert (run / name).exists(), name
    assert (run / "checkpoints" / "best.pt").exists()
    assert (run / "checkpoints" / "last.pt").exists()
    assert rec.finished
    assert len(rec.train_losses) == rec.stopped_epoch
    again = read_run_record(run)
    assert isinstance(again, RunRecord)
    assert again.best_epoch == rec.best_epoch
    assert again.val_losses == rec.val_losses


def test_stops_when_validation_plateaus(tmp_path, manifest):
    cfg = make_cfg(epochs=8, early_stop_patience=2)
    curve = [5.0, 4.0, 4.5, 4.6, 4.7, 4.8, 4.9, 5.1]
    rec = train(cfg, manifest, tmp_path / "run", val_override=curve, quiet=True)
    assert rec.stopped_early
    assert rec.stopped_epoch == 4  # two non-improving epochs after the best
    assert rec.best_epoch == 2
    assert rec.best_val == 4.0
    payload = load_checkpoint(os.path.join(rec.best_checkpoint))
    assert payload["extra"]["epoch"] == 2


def test_no_early_stop_when_loss_keeps_improving(tmp_path, manifest):
    cfg = make_cfg(epochs=3, early_stop_patience=2)
    curve = [5.0, 4.0, 3.0]
    rec = train(cfg, manifest, tmp_path / "run", val_override=curve, quiet=True)
    assert not rec.stopped_early
    assert rec.stopped_epoch == 3
    assert rec.best_epoch == 3


def test_metrics_have_no_wallclock_fields(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1)
    train(cfg, manifest, tmp_path / "run", quiet=True)
    allowed = {
        "epoch",
        "train_loss",
        "val_loss",
        "best_val",
        "best_epoch",
        "train_loss_grouping_a",
        "train_loss_grouping_b",
    }
    for m in read_metrics(tmp_path / "run"):
        assert set(m) <= allowed
    with open(tmp_path / "run" / "timings.jsonl") as fh:
        t = [json.loads(ln) for ln in fh.read().splitlines()]
    assert all("wall_s" in rec for rec in t)


def test_equal_seed_runs_write_identical_metrics(tmp_path, manifest):
    cfg = make_cfg(epochs=3, early_stop_patience=2)
    train(cfg, manifest, tmp_path / "a", quiet=True)
    train(cfg, manifest, tmp_path / "b", quiet=True)
    a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    b = (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert a == b


def test_resume_matches_uninterrupted_run(tmp_path, manifest):
    cfg = make_cfg(epochs=4, early_stop_patience=3)
    straight = train(cfg, manifest, tmp_path / "straight", quiet=True)

    part = train(cfg, manifest, tmp_path / "resumed", quiet=True, max_epochs_this_call=2)
    assert not part.finished
    assert part.stopped_epoch == 2
    resumed = train(cfg, manifest, tmp_path / "resumed", resume=True, quiet=True)
    assert resumed.finished
    assert resumed.stopped_epoch == straight.stopped_epoch

    a = (tmp_path / "straight" / "metrics.jsonl").read_bytes()
    b = (tmp_path / "resumed" / "metrics.jsonl").read_bytes()
    assert a == b

    sa = load_checkpoint(straight.last_checkpoint)["model_state"]
    sb = load_checkpoint(resumed.last_checkpoint)["model_state"]
    assert sa.keys() == sb.keys()
    for k in sa:
        assert torch.equal(sa[k], sb[k]), k


def test_resume_truncates_stale_metric_lines(tmp_path, manifest):
    cfg = make_cfg(epochs=4, early_stop_patience=3)
    train(cfg, manifest, tmp_path / "run", quiet=True, max_epochs_this_call=2)
    with open(tmp_path / "run" / "metrics.jsonl", "a") as fh:
        fh.write(json.dumps({"epoch": 99, "train_loss": 0.0, "val_loss": 0.0}) + "\n")
    train(cfg, manifest, tmp_path / "run", resume=True, quiet=True)
    epochs = [m["epoch"] for m in read_metrics(tmp_path / "run")]
    assert epochs == [1, 2, 3, 4]


def test_resume_of_finished_run_is_noop(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1)
    first = train(cfg, manifest, tmp_path / "run", quiet=True)
    before = (tmp_path / "run" / "metrics.jsonl").read_bytes()
    again = train(cfg, manifest, tmp_path / "run", resume=True, quiet=True)
    assert again.finished
    assert again.best_epoch == first.best_epoch
    assert (tmp_path / "run" / "metrics.jsonl").read_bytes() == before


def test_resume_rejects_changed_config(tmp_path, manifest):
    cfg = make_cfg(epochs=4, early_stop_patience=3)
    train(cfg, manifest, tmp_path / "run", quiet=True, max_epochs_this_call=1)
    other = apply_overrides(cfg, ["train.lr=0.0005"])
    with pytest.raises(ConfigError):
        train(other, manifest, tmp_path / "run", resume=True, quiet=True)


def test_resume_without_checkpoint_fails(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1)
    with pytest.raises(CheckpointError):
        train(cfg, manifest, tmp_path / "empty", resume=True, quiet=True)


def test_mixit_scheme_logs_both_groupings(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1, scheme="mixit")
    rec = train(cfg, manifest, tmp_path / "run", quiet=True)
    assert rec.scheme == "mixit"
    for m in read_metrics(tmp_path / "run"):
        assert "train_loss_grouping_a" in m
        assert "train_loss_grouping_b" in m
        assert m["train_loss"] <= min(m["train_loss_grouping_a"], m["train_loss_grouping_b"]) + 1e-9


def test_train_losses_are_finite(tmp_path, manifest):
    cfg = make_cfg(epochs=2, early_stop_patience=1, scheme="mixit_aug")
    rec = train(cfg, manifest, tmp_path / "run", quiet=True)
    assert np.isfinite(rec.train_losses).all()
    assert np.isfinite(rec.val_losses).all()
