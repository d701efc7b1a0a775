import json

import pytest

from mibracket.config import RunConfig, env_key
from mibracket.errors import ConfigError


class TestDefaults:
    def test_protocol_constants(self):
        c = RunConfig()
        assert (c.sample_size, c.ensemble, c.epochs) == (500, 3, 100)
        assert (c.lr, c.weight_decay, c.clip_norm) == (1e-4, 1e-5, 1.0)
        assert (c.scheduler_factor, c.scheduler_patience) == (0.5, 10)
        assert (c.early_stop_delta, c.early_stop_patience, c.final_window) == (0.1, 7, 10)
        assert (c.ksg_k, c.bootstrap, c.ci_level) == (5, 10, 0.95)
        assert (c.hidden, c.leaky_slope, c.ema_alpha) == (256, 0.2, 0.01)
        assert (c.logvar_min, c.logvar_max) == (-6.0, 2.0)

    def test_round_trip(self):
        c = RunConfig(synthetic_pairs=[{"rho": 0.3}], seed=99, pairing="same-rows")
        assert RunConfig.from_dict(json.loads(json.dumps(c.to_dict())), env={}) == c


class TestLoading:
    def test_file_and_relative_paths(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"epochs": 7}))
        c = RunConfig.load(tmp_path / "cfg.json", env={})
        assert c.epochs == 7
        assert c.resolve("data/x.csv") == tmp_path / "data" / "x.csv"

    def test_env_overrides(self):
        env = {env_key("epochs"): "12", env_key("lr"): "0.01", env_key("decoupled_weight_decay"): "false",
               env_key("pairs"): '[["a", "b"]]'}
        c = RunConfig.from_dict({"epochs": 3}, env=env)
        assert (c.epochs, c.lr, c.decoupled_weight_decay, c.pairs) == (12, 0.01, False, [["a", "b"]])
        assert env_key("ksg_k") == "MIBRACKET_KSG_K"

    def test_bad_env_value(self):
        with pytest.raises(ConfigError, match="MIBRACKET_EPOCHS"):
            RunConfig.from_dict({}, env={"MIBRACKET_EPOCHS": "many"})

    def test_invalid_json(self, tmp_path):
        (tmp_path / "cfg.json").write_text("{oops")
        with pytest.raises(ConfigError, match="invalid JSON"):
            RunConfig.load(tmp_path / "cfg.json")


class TestValidation:
    def test_every_problem_listed_at_once(self):
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict({"epochs": 0, "lr": -1, "pairing": "zip", "ksg_k": 0, "bogus": 1}, env={})
        text = str(err.value)
        for field in ("epochs", "lr", "pairing", "ksg_k", "bogus"):
            assert field in text
        assert len(err.value.problems) >= 5

    def test_pairs_must_name_known_dimensions(self):
        with pytest.raises(ConfigError, match="missing"):
            RunConfig.from_dict({"combinations": [{"dimensions": {"a": "a.csv"}}], "pairs": [["a", "z"]]}, env={})

    def test_synthetic_rho_range(self):
        with pytest.raises(ConfigError, match="rho"):
            RunConfig.from_dict({"synthetic_pairs": [{"rho": 1.5}]}, env={})

    def test_attribution_section(self):
        with pytest.raises(ConfigError, match="filter"):
            RunConfig.from_dict({"attribution": {"source": "s.csv", "dimensions": {"d": "d.csv"}}}, env={})
