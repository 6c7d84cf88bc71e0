"""
Environment settings for IM-DCL.

Loads process-level settings (output location, logging) from environment
variables and an optional .env file using Pydantic. Run hyperparameters live
in the run configuration file instead (see src/cli/config_file.py).
"""

from functools import lru_cache
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables.

    Every field can be set with an ``IMDCL_`` prefixed variable,
    e.g. ``IMDCL_OUTPUT_DIR=runs/near``.
    """

    model_config = SettingsConfigDict(
        env_prefix="IMDCL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # -------------------------------------------------------------------------
    # Output
    # -------------------------------------------------------------------------
    output_dir: str = Field(
        default="outputs",
        description="Directory for reports, trajectories and checkpoints",
    )

    # -------------------------------------------------------------------------
    # Logging
    # -------------------------------------------------------------------------
    log_level: str = Field(default="INFO", description="Logging level")
    log_json: bool = Field(
        default=False, description="Emit console logs as JSON records"
    )
    log_dir: Optional[str] = Field(
        default=None, description="Directory for a rotating imdcl.log (unset: console only)"
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached process settings.

    Returns:
        Settings: Validated settings object
    """
    return Settings()
