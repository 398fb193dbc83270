import pytest

from factcheck.config import ConfigError, ExperimentConfig, read_config_file


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.n == 3
        assert cfg.resolved_reset_point == pytest.approx((0.5 - 0.05 / 3, 0.5 - 0.1 / 3, 0.45))
        assert cfg.resolved_init == cfg.resolved_reset_point
        assert cfg.resolved_cadence == 1

    def test_cadence(self):
        assert ExperimentConfig(horizon=10**6).resolved_cadence == 100
        assert ExperimentConfig(horizon=10**6 + 1).resolved_cadence == 101

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"pi": (0.0, 0.3)},
            {"pi": (0.2, 0.3), "n": 3},
            {"horizon": -1},
            {"cadence": 0},
            {"mode": "fast"},
            {"schedule": "power:0.4"},
            {"schedule": "harmonic:0.5"},
            {"trunc_c": 0.5},
            {"reset_point": (0.5, 0.5)},
            {"init": (0.5, 1.5, 0.5)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kwargs)

    def test_mapping(self):
        cfg = ExperimentConfig.from_mapping({"pi": "0.1, 0.4", "T": "50", "trunc-c": "0.2", "init": "none"})
        assert cfg.pi == (0.1, 0.4) and cfg.horizon == 50 and cfg.trunc_c == 0.2 and cfg.init is None

    def test_mapping_errors(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"pi": "0.1", "colour": "red"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"pi": "0.1", "seed": "x"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_mapping({"seed": "1"})

    def test_overrides_reset_n(self):
        cfg = ExperimentConfig().with_overrides(pi=(0.2, 0.3), seed=None)
        assert cfg.n == 2 and cfg.seed == 0

    def test_file(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# comment\npi = 0.1,0.2\n\nseed=3  # trailing\n")
        assert read_config_file(path) == {"pi": "0.1,0.2", "seed": "3"}
        path.write_text("pi\n")
        with pytest.raises(ConfigError):
            read_config_file(path)

    def test_round_trip(self):
        cfg = ExperimentConfig(pi=(0.2, 0.3), init=(0.4, 0.4))
        assert ExperimentConfig(**cfg.to_dict()) == cfg
