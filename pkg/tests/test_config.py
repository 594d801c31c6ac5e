import pytest

from topoctl.config import (
    KEYS,
    ConfigError,
    SimConfig,
    dumps_config,
    env_overrides,
    get_key,
    load_config,
    parse_config,
    set_key,
)


def test_defaults_validate():
    cfg = SimConfig().validate()
    assert cfg.tc_runs == 119


def test_parse_nested_keys_and_comments():
    cfg = parse_config("# comment\nnode_count = 12\nmobility.alpha = 0.5  # trailing\ncheck = no\n")
    assert cfg.node_count == 12 and cfg.mobility.alpha == 0.5 and cfg.check is False


@pytest.mark.parametrize("text", ["bogus = 1", "node_count = many", "node_count 5", "check = maybe"])
def test_parse_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


@pytest.mark.parametrize("key, value", [
    ("node_count", "0"), ("hesitation", "1.5"), ("mode", "fast"), ("tc_interval", "700"),
    ("mobility.alpha", "-0.1"), ("link_order", "size"), ("energy.per_message", "-1"),
])
def test_validation_errors(key, value):
    cfg = SimConfig()
    set_key(cfg, key, value)
    with pytest.raises(ConfigError):
        cfg.validate()


def test_dump_round_trip():
    cfg = SimConfig()
    set_key(cfg, "mobility.time_step", "30")
    set_key(cfg, "mode", "batch")
    again = parse_config(dumps_config(cfg))
    assert all(get_key(again, k) == get_key(cfg, k) for k in KEYS)


def test_env_overrides():
    cfg = env_overrides(SimConfig(), {"TOPOCTL_MOBILITY__ALPHA": "0.3", "TOPOCTL_SEED": "9", "OTHER": "x"})
    assert cfg.mobility.alpha == 0.3 and cfg.seed == 9


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.cfg"))
