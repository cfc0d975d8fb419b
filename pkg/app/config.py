"""
Application configuration management with environment variables and settings.
"""
from functools import lru_cache
from typing import Literal
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from app import __version__


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # Application
    APP_NAME: str = "missing-mass-risk"
    APP_VERSION: str = __version__

    # Logging
    LOG_LEVEL: str = "WARNING"
    LOG_FORMAT: Literal["json", "text"] = "json"
    LOG_FILE: str | None = None
    LOG_ROTATION: str = "50 MB"

    # Monte Carlo engine
    MC_THREADS: int = Field(default=1, ge=1, description="Default worker count for replicate blocks")
    MC_BLOCK_ELEMENTS: int = Field(default=2**22, ge=1, description="Cap on values drawn per dispatched chunk of seeded blocks")
    MC_DEFAULT_REPS: int = 100_000
    MC_DEFAULT_SEED: int = 0

    # Exact evaluators
    BRUTE_FORCE_LIMIT: int = Field(default=10**7, description="Largest k**n enumerated by brute force")
    PAIR_SUM_CHUNK: int = 1024
    PAIR_SUM_WORKERS: int = 1
    INEQUALITY_RTOL: float = 1e-9
    ASYMMETRIC_DIRICHLET_MAX_K: int = 2000

    # Coefficient optimization
    GOLDEN_TOL: float = 1e-10
    OPTIMIZE_LOWER: float = 1e-2
    OPTIMIZE_UPPER: float = 1e2
    GRID_RESOLUTION: float = 1e-3

    # Concentration simulation guard (k = ceil(e^n) tail symbols)
    DE3_MIN_N: int = 8
    DE3_MAX_N: int = 14

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Get cached settings instance.
    Using lru_cache ensures we only create one settings instance.
    """
    return Settings()
