"""
Core settings for the pqcexpr pipeline.
Uses Pydantic Settings for environment variable management.
"""

from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Pipeline settings loaded from PQCEXPR_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="PQCEXPR_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    environment: str = Field(default="development", description="Environment: development, ci, production")

    # Reproducibility
    seed: int = Field(default=0, description="Master seed used when a command gets no --seed flag")

    # Circuit caps
    max_qubits: int = 4
    max_depth: int = 40

    # Expressibility estimator defaults
    num_samples: int = 5000
    num_bins: int = 75
    shots: int = Field(default=4096, description="Shot count for the kernel estimator mode")

    # Parallelism
    jobs: int = 1

    # Logging
    log_level: str = "INFO"
    log_format: Optional[str] = Field(default=None, description="console or json; unset means json in production, console elsewhere")

    @property
    def is_production(self) -> bool:
        """Check if running in production environment."""
        return self.environment.lower() == "production"

    @property
    def effective_log_format(self) -> str:
        if self.log_format:
            return self.log_format
        return "json" if self.is_production else "console"


# Global settings instance
settings = Settings()
