"""Process settings and experiment config files.

``Settings`` reads the environment (and ``.env``) once per process through the
``ConfigurationService`` singleton. ``load_experiment_config`` turns a JSON
config file into a validated ``ExperimentConfig`` and maps failures onto the
CLI error categories.
"""

import json
from pathlib import Path
from typing import Optional

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from common.exceptions import ConfigurationError, DataFormatError
from common.schemas import ExperimentConfig

__all__ = ["ConfigurationService", "Settings", "get_config_service", "load_experiment_config"]


class Settings(BaseSettings):
    """Centralized process settings for the simulator.

    Environment variables automatically override defaults; a ``.env`` file in
    the working directory is read when present.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore",
    )

    # Application settings
    APP_NAME: str = "bnnsim"
    VERSION: str = "1.0.0"

    # Dataset and artifact locations
    BNNSIM_DATA_DIR: Path | None = None
    BNNSIM_OUTPUT_DIR: Path | None = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    PROGRESS_BARS: bool = True

    # Sweep execution
    SWEEP_WORKERS: int = 1

    # Metrics
    METRICS_ENABLED: bool = True


class ConfigurationService:
    """Caches one ``Settings`` instance per process."""

    _instance: Optional["ConfigurationService"] = None
    _settings: Settings | None = None

    def __new__(cls) -> "ConfigurationService":
        """Implement singleton pattern."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        """Initialize the configuration service."""
        if not hasattr(self, "_initialized"):
            self._settings = None
            self._initialized = True

    def get_settings(self) -> Settings:
        """Get cached settings instance.

        Returns:
            Settings: Configuration settings instance
        """
        if self._settings is None:
            self._settings = Settings()
        return self._settings

    def clear_settings(self) -> None:
        """Drop the cached settings; the next ``get_settings`` rereads the environment."""
        self._settings = None

    def reload_settings(self) -> Settings:
        """Reload settings from environment.

        Returns:
            Settings: Fresh configuration settings instance
        """
        self.clear_settings()
        return self.get_settings()

    def validate_settings(self) -> bool:
        """Validate all settings parse from the current environment.

        Returns:
            bool: True if the settings are valid
        """
        try:
            self.get_settings()
            return True
        except ValidationError:
            return False

    def resolve_output(self, path: Path) -> Path:
        """Anchor a relative artifact path under ``BNNSIM_OUTPUT_DIR`` when set."""
        root = self.get_settings().BNNSIM_OUTPUT_DIR
        if root is None or path.is_absolute():
            return path
        return root / path


def load_experiment_config(path: Path | None) -> ExperimentConfig:
    """Load and validate an experiment config file; ``None`` yields defaults.

    Raises:
        DataFormatError: The file does not exist or is not JSON.
        ConfigurationError: The JSON does not match the config schema.
    """
    if path is None:
        return ExperimentConfig()
    if not path.is_file():
        raise DataFormatError("Config file not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"Config file is not valid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigurationError(f"Invalid config {path}: {location}: {first['msg']}") from exc


# Global service instance
_config_service = ConfigurationService()


def get_config_service() -> ConfigurationService:
    """Get the singleton configuration service instance.

    Returns:
        ConfigurationService: The configuration service instance
    """
    return _config_service
