import json

import pytest

from driftfusion.config import apply_overrides, config_from_dict, load_config, load_config_dict, parse_override
from driftfusion.core import ConfigError


def test_toml_and_json_load_the_same(tmp_path):
    (tmp_path / "c.toml").write_text('[stream]\npreset = "sudden"\n[controller]\nk_alpha = 0.1\n')
    (tmp_path / "c.json").write_text(json.dumps({"stream": {"preset": "sudden"}, "controller": {"k_alpha": 0.1}}))
    a, _ = load_config(tmp_path / "c.toml")
    b, _ = load_config(tmp_path / "c.json")
    assert a == b and a.stream.preset == "sudden" and a.controller.k_alpha == 0.1


def test_defaults_without_file():
    cfg, data = load_config()
    assert data == {} and cfg.phase1_steps == 1000 and cfg.phase2_steps == 3000 and cfg.eta0 == 5e-4


def test_override_parsing():
    assert parse_override("controller.k_alpha=0.05") == ("controller", "k_alpha", 0.05)
    assert parse_override("stream.preset=sudden") == ("stream", "preset", "sudden")
    assert parse_override('stream.preset="gradual"') == ("stream", "preset", "gradual")
    assert parse_override("harness.prime_history=true") == ("harness", "prime_history", True)
    assert parse_override("verify.n_cases=10") == ("verify", "n_cases", 10)


@pytest.mark.parametrize(
    "text, key",
    [
        ("controller.bogus=1", "controller.bogus"),
        ("nosection.k=1", "nosection.k"),
        ("k_alpha=1", "k_alpha"),
        ("controller.k_alpha", "controller.k_alpha"),
    ],
)
def test_bad_overrides_name_the_key(text, key):
    with pytest.raises(ConfigError) as e:
        parse_override(text)
    assert e.value.key == key
    assert key in str(e.value)


def test_unknown_keys_in_file_rejected(tmp_path):
    (tmp_path / "c.toml").write_text("[controller]\nkalpha = 0.1\n")
    with pytest.raises(ConfigError) as e:
        load_config_dict(tmp_path / "c.toml")
    assert e.value.key == "controller.kalpha"
    (tmp_path / "d.toml").write_text("[extras]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config_dict(tmp_path / "d.toml")
    (tmp_path / "e.toml").write_text("[controller\n")
    with pytest.raises(ConfigError):
        load_config_dict(tmp_path / "e.toml")


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_config("/nonexistent/config.toml")


def test_override_applies_on_top_of_file(tmp_path):
    (tmp_path / "c.toml").write_text("[controller]\nk_alpha = 0.1\n")
    cfg, data = load_config(tmp_path / "c.toml", ["controller.k_alpha=0.2", "harness.seed=9"])
    assert cfg.controller.k_alpha == 0.2 and cfg.seed == 9
    assert data["controller"]["k_alpha"] == 0.2


def test_value_errors_surface_as_config_errors():
    with pytest.raises(ConfigError):
        config_from_dict({"controller": {"k_alpha": "fast"}})
    with pytest.raises(ConfigError) as e:
        config_from_dict({"harness": {"eta0": 1.0}})
    assert e.value.key == "eta0"


def test_echoed_config_round_trips():
    data = apply_overrides({}, ["stream.preset=recurring", "harness.seed=3", "controller.alpha_mode=sigmoid"])
    cfg = config_from_dict(data)
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
