"""Application configuration"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide defaults loaded from environment variables"""

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", case_sensitive=False, extra="ignore"
    )

    # App
    log_level: str = "INFO"
    output_dir: str = "./runs"

    # Experiment defaults
    default_horizon: int = 10_000
    default_h: float = 0.99
    default_trials: int = 32
    sweep_workers: int = 1

    # Numerics
    reference_tol: float = 1e-10
    reference_max_iter: int = 1_000_000
    power_iteration_tol: float = 1e-9
    power_iteration_max_iter: int = 10_000


# Global settings instance
settings = Settings()
