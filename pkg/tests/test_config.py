"""Unit tests for configuration management."""

from pathlib import Path

import pytest
from pydantic import ValidationError

from prticle.config import ExperimentConfig, Settings, get_settings, load_experiment_config
from prticle.errors import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def test_settings_default_values(monkeypatch):
    """Test Settings uses correct default values for optional fields."""
    get_settings.cache_clear()
    for key in ("PRTICLE_LOG_LEVEL", "PRTICLE_MAX_WORKERS", "PRTICLE_USE_ORACLE_CACHE"):
        monkeypatch.delenv(key, raising=False)

    settings = Settings(_env_file=None)

    assert settings.log_level == "INFO"
    assert settings.log_rotation == "100 MB"
    assert settings.log_retention == "30 days"
    assert settings.cache_directory == "./cache"
    assert settings.use_oracle_cache is True
    assert settings.output_directory == "./results"
    assert settings.max_workers == 4


def test_settings_read_prefixed_env(monkeypatch):
    """Test Settings picks up PRTICLE_-prefixed environment variables."""
    monkeypatch.setenv("PRTICLE_LOG_LEVEL", "DEBUG")
    monkeypatch.setenv("PRTICLE_MAX_WORKERS", "2")
    monkeypatch.setenv("PRTICLE_USE_ORACLE_CACHE", "false")

    settings = Settings(_env_file=None)

    assert settings.log_level == "DEBUG"
    assert settings.max_workers == 2
    assert settings.use_oracle_cache is False


def test_settings_reject_zero_workers(monkeypatch):
    """Test the job pool needs at least one worker."""
    monkeypatch.setenv("PRTICLE_MAX_WORKERS", "0")
    with pytest.raises(ValidationError):
        Settings(_env_file=None)


def test_get_settings_singleton():
    """Test get_settings returns the same cached instance."""
    get_settings.cache_clear()
    assert get_settings() is get_settings()
    get_settings.cache_clear()


class TestExperimentConfig:
    """Tests for ExperimentConfig validation and defaults."""

    def test_bare_experiment_gets_defaults(self):
        """A bare experiment key is a complete config."""
        config = ExperimentConfig(experiment="example1-d1").with_defaults()
        assert config.n == 500
        assert config.T_list == [100, 300, 500, 1000]
        assert config.grid_resolution == 400
        assert config.refresh_rounds == 0
        assert config.seed == 2024

    def test_marked_pp_defaults(self):
        """The marked point process fit defaults to T = 20000 and one refresh round."""
        config = ExperimentConfig(experiment="marked-pp", data_path="trees.csv").with_defaults()
        assert config.T == 20_000
        assert config.refresh_rounds == 1
        assert config.variant == "full"

    def test_single_T_becomes_ladder(self):
        """T on a ladder experiment becomes a one-element T_list."""
        config = ExperimentConfig(experiment="convergence-study", T=50).with_defaults()
        assert config.T_list == [50]

    def test_explicit_values_survive_defaults(self):
        """with_defaults only fills unset fields."""
        config = ExperimentConfig(experiment="example3-5dim", n=40, refresh_rounds=0).with_defaults()
        assert config.n == 40
        assert config.refresh_rounds == 0
        assert config.T == 10_000

    def test_marked_pp_requires_data_path(self):
        """marked-pp without a data path is invalid."""
        with pytest.raises(ValidationError):
            ExperimentConfig(experiment="marked-pp")

    @pytest.mark.parametrize("beta", [0.0, 1.5])
    def test_sphere_beta_range(self, beta):
        """A fixed sphere concentration lies in (0, 1]."""
        assert ExperimentConfig(experiment="example2-sphere", sphere_beta=1.0).sphere_beta == 1.0
        with pytest.raises(ValidationError):
            ExperimentConfig(experiment="example2-sphere", sphere_beta=beta)

    @pytest.mark.parametrize(
        "fields",
        [
            {"gamma": 0.5},
            {"refresh_df": 2.0},
            {"refresh_inflate": 0.9},
            {"T_list": []},
            {"T_list": [10, 0]},
            {"unknown_key": 1},
            {"compare_variants": True},
            {"sphere_beta": 0.5},
        ],
    )
    def test_invalid_fields_rejected(self, fields):
        """Out-of-range and unknown fields fail validation."""
        with pytest.raises(ValidationError):
            ExperimentConfig(experiment="example1-d1", **fields)


class TestLoadExperimentConfig:
    """Tests for YAML loading with flag overrides."""

    def test_file_and_overrides(self, tmp_path):
        """Flags override file values; None overrides are ignored."""
        path = tmp_path / "run.yaml"
        path.write_text("experiment: example1-d2\nseed: 11\nn: 50\n", encoding="utf-8")

        config = load_experiment_config(path, {"seed": 99, "T": None})

        assert config.experiment == "example1-d2"
        assert config.seed == 99
        assert config.n == 50

    def test_nested_file_rejected(self, tmp_path):
        """Config documents must be flat."""
        path = tmp_path / "run.yaml"
        path.write_text("experiment: example1-d1\nrefresh:\n  df: 5\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_experiment_config(path)

    def test_validation_failure_is_config_error(self, tmp_path):
        """Pydantic validation errors surface as ConfigError with exit code 2."""
        with pytest.raises(ConfigError) as exc_info:
            load_experiment_config(None, {"experiment": "example1-d1", "gamma": 2.0})
        assert exc_info.value.exit_code == 2

    def test_missing_file(self, tmp_path):
        """An unreadable file is a ConfigError."""
        with pytest.raises(ConfigError):
            load_experiment_config(tmp_path / "missing.yaml")

    @pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
    def test_shipped_configs_load(self, path):
        """Every example config in configs/ validates and its file name starts with its experiment."""
        config = load_experiment_config(path)
        assert path.stem.startswith(config.experiment)
