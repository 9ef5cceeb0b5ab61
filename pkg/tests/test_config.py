import pytest

from cabblab.config import (
    CONFIG_KEYS,
    ConfigError,
    KEY_TABLE,
    RunConfig,
    load_run_config,
    parse_config_text,
)
from cabblab.labeling import FeatureConfig
from cabblab.model import Architecture, TrainConfig, TrainMode
from cabblab.similarity import EventWeights


def test_defaults_match_component_defaults():
    cfg = RunConfig()
    assert cfg.architecture() == Architecture()
    assert cfg.event_weights() == EventWeights()
    assert cfg.feature_config() == FeatureConfig()
    expected = TrainConfig(lam=0.75, seed=0, mode=TrainMode.MULTITASK)
    assert cfg.train_config() == expected
    synth = cfg.synth_config()
    assert synth.n_sessions == 20000
    assert synth.p_caba + synth.p_related_cabb + synth.p_noise_cabb + synth.p_no_purchase == 1.0


def test_every_key_has_a_distinct_field():
    attrs = [attr for attr, _ in KEY_TABLE.values()]
    assert len(attrs) == len(set(attrs))
    assert set(CONFIG_KEYS) == set(KEY_TABLE)


def test_parse_config_text_skips_comments_and_blanks():
    pairs = parse_config_text("# header\n\n  seed = 9 \ntrain.lambda=0.5\n")
    assert pairs == {"seed": "9", "train.lambda": "0.5"}


def test_parse_config_text_keeps_equals_in_value():
    assert parse_config_text("io.out_dir=run=a")["io.out_dir"] == "run=a"


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("seed 9\n", "expected key=value"),
        ("=9\n", "empty key"),
        ("seed=1\nseed=2\n", "duplicate key"),
    ],
)
def test_parse_config_text_rejects_junk(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(text)


def test_parse_error_carries_source_and_line():
    with pytest.raises(ConfigError, match=r"run\.cfg:3"):
        parse_config_text("seed=1\n\njunk line\n", source="run.cfg")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'sneed'"):
        load_run_config(None, {"sneed": "3"})


@pytest.mark.parametrize(
    "key,value",
    [
        ("seed", "seven"),
        ("seed", "1.5"),
        ("train.lambda", "high"),
        ("train.lambda", "inf"),
        ("train.lambda", "nan"),
        ("arch.hidden_dims", "16,,8"),
        ("arch.hidden_dims", "16,8,"),
        ("sweep.lambdas", "0.1,x"),
        ("train.mode", "dual"),
        ("train.scheme", "oracle"),
        ("eval.split", "validation"),
        ("importance.head", "cabc"),
    ],
)
def test_bad_values_rejected_with_key_context(key, value):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        load_run_config(None, {key: value})


def test_typed_values_land_on_the_config():
    cfg = load_run_config(
        None,
        {
            "seed": "11",
            "train.lambda": "0.25",
            "arch.hidden_dims": "16, 8",
            "sweep.lambdas": "0,0.5",
            "train.mode": "caba_only",
            "weights.impression": "0.5",
        },
    )
    assert cfg.seed == 11
    assert cfg.train_lambda == 0.25
    assert cfg.arch_hidden_dims == (16, 8)
    assert cfg.sweep_lambdas == (0.0, 0.5)
    assert cfg.train_mode == "caba_only"
    assert cfg.event_weights().w_impression == 0.5


def test_file_layer_overrides_defaults(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=3\ntrain.epochs=7\n", encoding="utf-8")
    cfg = load_run_config(path, {})
    assert cfg.seed == 3
    assert cfg.train_epochs == 7
    assert cfg.train_batch_size == RunConfig().train_batch_size


def test_command_line_override_wins_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=3\n", encoding="utf-8")
    cfg = load_run_config(path, {"seed": "4"})
    assert cfg.seed == 4


def test_missing_config_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_run_config(tmp_path / "absent.cfg", {})


def test_file_errors_name_the_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed=x\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="run.cfg"):
        load_run_config(path, {})
