"""TOML run-configuration tests."""

import pytest

from implut import config


def test_empty_config_gives_defaults():
    cfg = config.loads("")
    assert cfg.seed == 0
    assert len(cfg.filter_names) == 5
    assert cfg.lut_n == 33
    assert cfg.train.stage1_steps > 0
    assert cfg.train.pg.fd_step == pytest.approx(0.05)


def test_overrides_apply():
    cfg = config.loads("""
[general]
seed = 9
[guidance]
delta = 0.1
lambda_off = 0.5
[training]
stage1_steps = 7
stage2_lr_w = 0.5
[lut]
n = 17
[data]
count = 10
size = [32, 48]
[service]
port = 9001
""")
    assert cfg.seed == 9 and cfg.train.seed == 9
    assert cfg.train.pg.fd_step == pytest.approx(0.1)
    assert cfg.train.pg.lambda_off == pytest.approx(0.5)
    assert cfg.train.stage1_steps == 7
    assert cfg.train.stage2_lr_w == pytest.approx(0.5)
    assert cfg.lut_n == 17
    assert cfg.data_count == 10 and cfg.data_size == (32, 48)
    assert cfg.service.port == 9001


def test_custom_filters_and_prompts():
    cfg = config.loads("""
[general]
filters = ["Exposure", "Warmth"]
[prompts]
"Warmth" = ["Warm photo.", "Cold photo."]
""")
    assert cfg.filter_names == ("Exposure", "Warmth")
    assert cfg.prompts[1].positive == "Warm photo."
    assert cfg.prompts[0].positive == "Overexposed photo."  # default kept


def test_filter_without_prompt_rejected():
    with pytest.raises(config.ConfigError):
        config.loads('[general]\nfilters = ["Mystery"]')


def test_unknown_keys_rejected():
    with pytest.raises(config.ConfigError):
        config.loads("[training]\nlearning_rate = 1.0")
    with pytest.raises(config.ConfigError):
        config.loads("[typo_section]\nx = 1")


def test_invalid_toml_rejected():
    with pytest.raises(config.ConfigError):
        config.loads("not toml :::")


def test_lambda_per_filter_length_checked():
    with pytest.raises(config.ConfigError):
        config.loads("[guidance]\nlambda_per_filter = [1.0, 2.0]")


def test_fingerprint_stable_and_sensitive():
    a = config.loads("")
    b = config.loads("")
    c = config.loads("[general]\nseed = 1")
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_load_from_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[general]\nseed = 3\n")
    assert config.load(path).seed == 3
