"""
Configuration Management

Centralized process settings using Pydantic Settings with environment variable support.
Per-run parameters (model, scenario, integrator) live in src.schemas.config.
"""

from functools import lru_cache
from typing import Literal, Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Delay solver
    delay_method: Literal["secant", "bisect"] = "secant"
    delay_tol_scale: float = 1e-12
    delay_tau_tol: float = 1e-13
    delay_max_iter: int = 200
    coincidence_tol: float = 1e-14

    # Histories
    append_slack: float = 1e-12
    window_slack: float = 1e-12

    # Influence certification
    speed_bound_tol: float = 1e-6
    speed_bound_base_pitch: float = 1.0 / 64.0
    lipschitz_spot_checks: int = 4097

    # Audits
    audit_slack: float = 1e-9
    decay_slack: float = 1e-2
    speed_slack: float = 1e-10

    # Picard oracle
    picard_tol: float = 1e-9
    picard_max_iter: int = 200

    # Application
    debug: bool = False
    log_level: str = "INFO"
    log_file: Optional[str] = None
    progress_every: int = 1000
    default_out_dir: str = "runs"
    app_name: str = "Finite-Speed Consensus Engine"
    app_version: str = "0.1.0"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Global settings instance
settings = get_settings()
