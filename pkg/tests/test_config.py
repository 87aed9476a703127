import pytest

from robustse.config import (
    ModelSettings,
    TrainSettings,
    apply_overrides,
    apply_paper_scale,
    default_config,
    from_dict,
    load_config,
    save_snapshot,
    to_dict,
)
from robustse.errors import ConfigError


def test_dict_roundtrip():
    cfg = default_config()
    assert from_dict(to_dict(cfg)) == cfg


def test_partial_dict_keeps_other_defaults():
    cfg = from_dict({"train": {"lr": 0.01}})
    assert cfg.train.lr == 0.01
    assert cfg.train.batch_size == default_config().train.batch_size
    assert cfg.data == default_config().data


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        from_dict({"training": {}})
    with pytest.raises(ConfigError):
        from_dict({"train": {"learning_rate": 0.01}})
    with pytest.raises(ConfigError):
        from_dict({"train": "fast"})


def test_overrides_parse_yaml_scalars():
    cfg = default_config()
    out = apply_overrides(
        cfg,
        [
            "train.lr=0.0005",
            "model.bidirectional=false",
            "mixit.augment.snr_db=[-3, 9]",
            "train.aggregation=SAMPLE_MEDIAN_TF_MEAN",
        ],
    )
    assert out.train.lr == 0.0005
    assert out.model.bidirectional is False
    assert out.mixit_augment.snr_db_range == (-3.0, 9.0)
    assert out.train.aggregation == "sample_median_tf_mean"
    # the input config is untouched
    assert cfg.train.lr == default_config().train.lr


def test_override_errors():
    cfg = default_config()
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["train.lr"])  # no '='
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["train.nope=1"])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["mixit.augment=1"])  # section, not a leaf


def test_paper_scale():
    cfg = apply_paper_scale(default_config())
    assert cfg.train.epochs == 1000
    assert cfg.train.early_stop_patience == 140
    assert cfg.model.bottleneck == 512
    assert cfg.model.recurrent_layers == 3
    # everything else keeps the desk-scale value
    assert cfg.train.batch_size == default_config().train.batch_size


def test_snapshot_roundtrip(tmp_path):
    cfg = apply_overrides(default_config(), ["train.seed=3", "data.n_clips=17"])
    path = tmp_path / "config.snapshot"
    save_snapshot(path, cfg)
    assert load_config(path) == cfg


def test_load_config_defaults_and_errors(tmp_path):
    assert load_config(None) == default_config()
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load_config(empty) == default_config()

    bad = tmp_path / "bad.yaml"
    bad.write_text("just a string")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_train_settings_validation():
    with pytest.raises(ConfigError):
        TrainSettings(scheme="bogus")
    with pytest.raises(ConfigError):
        TrainSettings(distance="l1")
    with pytest.raises(ConfigError):
        TrainSettings(aggregation="global_max")
    with pytest.raises(ConfigError):
        TrainSettings(epochs=10, early_stop_patience=10)
    with pytest.raises(ConfigError):
        TrainSettings(lr=0.0)
    with pytest.raises(ConfigError):
        TrainSettings(crops_per_clip=0)
    with pytest.raises(ConfigError):
        ModelSettings(n_outputs=2)


def test_scheme_names_normalized():
    cfg = from_dict({"train": {"scheme": "MIXIT_AUG", "distance": "SDR"}})
    assert cfg.train.scheme == "mixit_aug"
    assert cfg.train.distance == "sdr"
