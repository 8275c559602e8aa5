"""Configuration management using Pydantic Settings and flat YAML experiment files."""

from functools import lru_cache
from pathlib import Path
from typing import Any, Literal, Optional

import yaml
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from prticle.errors import ConfigError


class Settings(BaseSettings):
    """Process settings loaded from environment variables (prefix PRTICLE_)."""

    model_config = SettingsConfigDict(
        env_prefix="PRTICLE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"
    log_rotation: str = "100 MB"
    log_retention: str = "30 days"
    log_directory: str = "logs"
    log_to_file: bool = True

    # Oracle cache
    cache_directory: str = "./cache"
    use_oracle_cache: bool = True

    # Experiments
    output_directory: str = "./results"
    max_workers: int = Field(default=4, ge=1)


@lru_cache()
def get_settings() -> Settings:
    """
    Get process settings singleton.

    Uses lru_cache to ensure only one Settings instance is created.

    Returns:
        Settings: Process settings instance
    """
    return Settings()


ExperimentName = Literal[
    "example1-d1",
    "example1-d2",
    "example2-sphere",
    "example3-5dim",
    "convergence-study",
    "marked-pp",
]

LADDER_EXPERIMENTS = {"example1-d1", "example1-d2", "convergence-study"}

# Per-experiment defaults; a bare `experiment:` key is a complete config.
_DEFAULTS: dict[str, dict[str, Any]] = {
    "example1-d1": {"n": 500, "T_list": [100, 300, 500, 1000], "grid_resolution": 400, "n_mc": 100_000, "refresh_rounds": 0},
    "example1-d2": {"n": 500, "T_list": [100, 300, 500, 1000], "grid_resolution": 100, "n_mc": 100_000, "refresh_rounds": 0},
    "example2-sphere": {"n": 2000, "T": 1000, "grid_resolution": 60, "n_mc": 20_000, "refresh_rounds": 0},
    "example3-5dim": {"n": 500, "T": 10_000, "grid_resolution": 80, "n_mc": 100_000, "refresh_rounds": 1},
    "convergence-study": {"n": 100, "T_list": [100, 300, 1000, 3000, 10_000], "grid_resolution": 2000, "n_mc": 0, "refresh_rounds": 0},
    "marked-pp": {"T": 20_000, "grid_resolution": 400, "n_mc": 0, "refresh_rounds": 1},
}


class ExperimentConfig(BaseModel):
    """Validated experiment configuration; mirrors the flat YAML document."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    experiment: ExperimentName
    T: Optional[int] = Field(default=None, ge=1, description="Particle count")
    T_list: Optional[list[int]] = Field(default=None, description="Particle-count ladder")
    n: Optional[int] = Field(default=None, ge=1, description="Simulated data size")
    gamma: float = Field(default=1.0, description="Weight schedule exponent")
    seed: int = Field(default=2024, ge=0)
    n_seeds: int = Field(default=5, ge=1, description="Seeds per ladder cell; medians are reported")
    n_perms: int = Field(default=1, ge=1)
    refresh_df: float = Field(default=5.0, gt=2.0)
    refresh_inflate: float = Field(default=1.5, ge=1.0)
    refresh_rounds: Optional[int] = Field(default=None, ge=0, description="Refresh rounds; experiment default when unset")
    refresh_T: Optional[int] = Field(default=None, ge=1)
    min_ess: Optional[float] = Field(default=3.0, gt=0.0)
    sigma2: float = Field(default=0.5, gt=0.0)
    grid_resolution: Optional[int] = Field(default=None, ge=2)
    n_mc: Optional[int] = Field(default=None, ge=0)
    output_dir: Optional[str] = None
    data_path: Optional[str] = None
    variant: Literal["full", "reduced"] = "full"
    compare_variants: bool = Field(default=False, description="Fit both marked-pp variants and compare them")
    sphere_beta: Optional[float] = Field(
        default=None, gt=0.0, le=1.0, description="Fixed sphere concentration; 1 gives uniform data and kernels"
    )

    @field_validator("gamma")
    @classmethod
    def validate_gamma(cls, v: float) -> float:
        """Validate that gamma lies in (0.5, 1]."""
        if not 0.5 < v <= 1.0:
            raise ValueError("gamma must lie in (0.5, 1]")
        return v

    @field_validator("T_list")
    @classmethod
    def validate_T_list(cls, v: Optional[list[int]]) -> Optional[list[int]]:
        """Validate the particle ladder is non-empty and positive."""
        if v is not None and (not v or any(t < 1 for t in v)):
            raise ValueError("T_list must be a non-empty list of positive integers")
        return v

    @model_validator(mode="after")
    def validate_experiment_fields(self):
        """Experiment-specific fields: marked-pp needs an input file, and the variant/beta switches belong to one experiment each."""
        if self.experiment == "marked-pp" and not self.data_path:
            raise ValueError("data_path is required for the marked-pp experiment")
        if self.compare_variants and self.experiment != "marked-pp":
            raise ValueError("compare_variants only applies to the marked-pp experiment")
        if self.sphere_beta is not None and self.experiment != "example2-sphere":
            raise ValueError("sphere_beta only applies to the example2-sphere experiment")
        return self

    def with_defaults(self) -> "ExperimentConfig":
        """Return a copy with experiment-specific defaults filled in."""
        update: dict[str, Any] = {}
        for key, value in _DEFAULTS[self.experiment].items():
            if getattr(self, key) is None:
                update[key] = value
        if self.experiment in LADDER_EXPERIMENTS and self.T is not None and self.T_list is None:
            update["T_list"] = [self.T]
        return self.model_copy(update=update)

    def manifest_dict(self) -> dict[str, Any]:
        """JSON-ready representation used in run manifests."""
        return self.model_dump(mode="json")


def load_experiment_config(
    path: Optional[str | Path] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> ExperimentConfig:
    """
    Load an experiment configuration from a flat YAML file plus overrides.

    Args:
        path: Optional YAML file with one key per ExperimentConfig field
        overrides: Values that take precedence over the file (None values are ignored)

    Returns:
        ExperimentConfig with defaults filled in

    Raises:
        ConfigError: If the file is unreadable, nested, or fails validation
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {path} must be a key/value mapping")
        nested = [k for k, v in loaded.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"Config file {path} must be flat; nested keys: {nested}")
        values.update(loaded)

    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value

    try:
        config = ExperimentConfig(**values).with_defaults()
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment configuration: {e}") from e

    logger.debug(f"Experiment config loaded: {config.manifest_dict()}")
    return config
