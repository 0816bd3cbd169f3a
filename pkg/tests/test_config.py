import pytest

from resdiff.config import ToolkitConfig, dump_config, load_config
from resdiff.errors import ConfigError


class TestConfigFile:
    def test_defaults_when_empty(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("\n# just a comment\n")
        cfg = load_config(path)
        assert cfg == ToolkitConfig()

    def test_round_trip(self, tmp_path):
        cfg = ToolkitConfig(schedule_kind="cosine", train_steps=123, model_width=16)
        path = tmp_path / "c.cfg"
        path.write_text(dump_config(cfg))
        assert load_config(path) == cfg

    def test_parses_values_and_comments(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text(
            "schedule.kind = sigmoid_family\n"
            "schedule.L = 5.0  # early decay\n"
            "schedule.p = 0.3\n"
            "train.seed = 9\n"
        )
        cfg = load_config(path)
        assert cfg.schedule_kind == "sigmoid_family"
        assert cfg.schedule_L == 5.0
        assert cfg.schedule_p == 0.3
        assert cfg.train_seed == 9
        spec = cfg.schedule_spec()
        assert (spec.L, spec.p) == (5.0, 0.3)

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("schedule.quality = 11\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("train.steps = soon\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("schedule.kind linear\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_semantic_validation(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("codec.lambda_min = 0.5\ncodec.lambda_max = 0.1\n")
        with pytest.raises(ConfigError):
            load_config(path)
        path.write_text("sampler.steps = 5000\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_builds_subconfigs(self):
        cfg = ToolkitConfig(model_width=16, train_crop=24)
        assert cfg.model_config().width == 16
        assert cfg.train_config().crop == 24
        assert cfg.train_config(steps=5).steps == 5
