import json

import pytest

from ReplayLab.handler.config import METHOD_IDS, SEED_ENV_VAR, RunConfig, default_config, validate_config
from ReplayLab.utility.errors import ConfigError, InvalidArgumentError


def _write(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestValidate:
    def test_defaults(self):
        config = validate_config({})
        assert config == default_config()
        assert config["methods"] == list(METHOD_IDS)
        assert config["rsd"]["T_exp"] == 500 and config["fields"]["delay"] == 50
        assert config["graph"]["branching"] == 0.24 and config["graph"]["firing_window"] == 20
        assert config["training"]["gamma"] == 0.95

    def test_partial_override(self):
        config = validate_config({"rsd": {"T_exp": 20}, "methods": ["GE"]})
        assert config["rsd"]["T_exp"] == 20
        assert config["rsd"]["T_rep"] == 500
        assert config["methods"] == ["GE"]

    @pytest.mark.parametrize("data, path", [
        ({"rsd": {"T_exp": 0}}, "rsd/T_exp"),
        ({"rsd": {"T_exp": 1.5}}, "rsd/T_exp"),
        ({"fields": {"decay": 1.0}}, "fields/decay"),
        ({"fields": {"retention": 0.5}}, "fields/retention"),
        ({"graph": {"sens_fraction": 0.4}}, "graph/sens_fraction"),
        ({"graph": {"nodes": True}}, "graph/nodes"),
        ({"graph": {"firing_window": 0}}, "graph/firing_window"),
        ({"graph": {"colour": 1}}, "graph/colour"),
        ({"rsd": {"rng_mode": "shared"}}, "rsd/rng_mode"),
        ({"training": {"scripted_fallback": "RANDOM"}}, "training/scripted_fallback"),
        ({"sweep": {"w_H": []}}, "sweep/w_H"),
        ({"methods": ["GE", "Oracle"]}, "methods/1"),
        ({"methods": ["GE", "GE"]}, "methods"),
        ({"deformation": {"mode": "local"}}, "deformation/mode"),
        ({"extras": {}}, "extras"),
    ])
    def test_first_bad_field_is_named(self, data, path):
        with pytest.raises(ConfigError) as info:
            validate_config(data)
        assert info.value.field == path
        assert f"'{path}'" in str(info.value)

    def test_config_error_is_an_argument_error(self):
        with pytest.raises(InvalidArgumentError):
            validate_config([])


class TestRunConfig:
    def test_hash_is_stable(self):
        a = RunConfig({"rsd": {"T_exp": 20}, "graph": {"seeds": [1]}})
        b = RunConfig({"graph": {"seeds": [1]}, "rsd": {"T_exp": 20}})
        assert a.config_hash == b.config_hash
        assert a.config_hash != RunConfig().config_hash

    def test_get(self):
        config = RunConfig({"rsd": {"T_exp": 20}})
        assert config.get("rsd/T_exp") == 20
        with pytest.raises(ConfigError):
            config.get("rsd/T_missing")

    def test_episode_seeds(self):
        config = RunConfig({"seeds": {"master": 2, "episodes": 3}})
        assert config.episode_seeds() == [2000, 2001, 2002]

    def test_typed_views(self):
        config = RunConfig({"rsd": {"T_exp": 20}, "graph": {"k_seed": 2, "injection_window": 4, "firing_window": 7}})
        rsd = config.rsd_config()
        assert (rsd.T_exp, rsd.k_seed, rsd.injection_window, rsd.firing_window) == (20, 2, 4, 7)
        assert config.field_params().delay == 50
        assert config.deformation_spec().w_H == 2.0
        assert config.training_config().batch_steps == 2048

    def test_with_overrides(self):
        config = RunConfig().with_overrides({"deformation/w_H": 4.0, "fields/scar_rate": 0.1})
        assert config.get("deformation/w_H") == 4.0
        assert config.get("fields/scar_rate") == 0.1
        with pytest.raises(ConfigError):
            RunConfig().with_overrides({"deformation/w_H": -1.0})

    def test_load(self, tmp_path, monkeypatch):
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        config = RunConfig.load(_write(tmp_path, {"seeds": {"master": 4}}))
        assert config.master_seed == 4

    def test_seed_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "9")
        config = RunConfig.load(_write(tmp_path, {"seeds": {"master": 4}}))
        assert config.master_seed == 9

    def test_bad_seed_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv(SEED_ENV_VAR, "nine")
        with pytest.raises(ConfigError):
            RunConfig.load(_write(tmp_path, {}))

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            RunConfig.load(str(tmp_path / "absent.json"))
