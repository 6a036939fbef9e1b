"""Configuration settings for pairforge."""

from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class PairForgeSettings(BaseSettings):
    """Process-level settings, read from the environment and ``.env``."""

    model_config = SettingsConfigDict(
        env_prefix="PAIRFORGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Locations
    config_dir: Optional[str] = Field(None, description="Default directory for run files")
    output_dir: str = Field("pairforge-out")

    # Simulation
    max_events: int = Field(50_000_000, description="Memory cap for one simulated stream")

    # Output
    float_format: str = Field("%.10g")

    # Logging
    log_level: str = Field("INFO")
    log_file: Optional[str] = Field(None)

    # Development Settings
    debug: bool = Field(False, description="Keep origin tags in simulated streams")

    @field_validator("max_events")
    @classmethod
    def validate_max_events(cls, v: int) -> int:
        """Validate the event cap is positive."""
        if v < 1:
            raise ValueError("max_events must be positive")
        return v

    @field_validator("float_format")
    @classmethod
    def validate_float_format(cls, v: str) -> str:
        """Validate the float format renders a number."""
        try:
            v % 1.5
        except (TypeError, ValueError) as e:
            raise ValueError(f"float_format is not a %-format: {e}") from e
        return v

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is valid."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"log_level must be one of {valid_levels}")
        return v.upper()

    def get_config_dir(self) -> Optional[Path]:
        """Get the default run-file directory, if configured."""
        return Path(self.config_dir).expanduser().resolve() if self.config_dir else None

    def get_output_dir(self) -> Path:
        """Get the default output directory."""
        return Path(self.output_dir).resolve()

    def to_dict(self) -> Dict[str, Any]:
        """Convert settings to dictionary."""
        return self.model_dump()


# Global settings instance
settings = PairForgeSettings()
