"""Application configuration using Pydantic Settings"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "ifkernel"
    LOG_LEVEL: str = "INFO"
    LOG_JSON: bool = True

    # Kernel design
    MOMENT_TOLERANCE: float = 1e-10
    CONDITION_LIMIT: float = 1e12

    # Halfwidth selection
    HALFWIDTH_MAX: float = 0.5
    HALFWIDTH_MEDIAN_WINDOW: int = 5
    DEFAULT_TIME_SCALE: float = 0.25

    # Instantaneous frequency
    LOW_COHERENCE_THRESHOLD: float = 0.1
    INTERFERENCE_MARGIN: float = 5.0
    SPECTRAL_QUADRATURE_POINTS: int = 4096

    # Reports
    BENCHMARK_JOBS: int = 1
    REPORT_SCHEMA_VERSION: str = "1.0"
    CSV_FLOAT_FORMAT: str = "%.12g"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="IFKERNEL_",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
