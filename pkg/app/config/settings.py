"""Process configuration with environment-based settings."""
import os
from typing import Optional
from dotenv import load_dotenv


class Config:
    """Base configuration class following Single Responsibility Principle."""

    # Load environment variables
    load_dotenv()

    # Parallelism (never changes results, only wall-clock time)
    NUM_WORKERS: int = max(1, int(os.getenv("FD_NUM_WORKERS", "1")))

    # Numerics
    DEFAULT_DTYPE: str = os.getenv("FD_DEFAULT_DTYPE", "float32")

    # Monitoring
    SENTRY_DSN: Optional[str] = os.getenv("SENTRY_DSN")
    ENABLE_METRICS: bool = os.getenv("ENABLE_METRICS", "true").lower() == "true"
    METRICS_PORT: Optional[int] = int(os.environ["METRICS_PORT"]) if os.getenv("METRICS_PORT") else None

    # Application
    DEBUG: bool = os.getenv("DEBUG", "false").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "DEBUG" if DEBUG else "INFO").upper()
    SHOW_PROGRESS: bool = os.getenv("FD_PROGRESS", "true").lower() == "true"

    @classmethod
    def validate(cls) -> None:
        """Validate configuration values."""
        if cls.DEFAULT_DTYPE not in ("float32", "float64"):
            raise ValueError(f"FD_DEFAULT_DTYPE must be float32 or float64, got {cls.DEFAULT_DTYPE}")
        if cls.METRICS_PORT is not None and not (0 < cls.METRICS_PORT < 65536):
            raise ValueError(f"METRICS_PORT out of range: {cls.METRICS_PORT}")


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    ENABLE_METRICS = False
    SHOW_PROGRESS = False
    NUM_WORKERS = 1


def get_config() -> type[Config]:
    """Factory method to get configuration based on environment."""
    env = os.getenv("FD_ENV", "development").lower()

    config_map = {
        "development": DevelopmentConfig,
        "production": ProductionConfig,
        "testing": TestingConfig,
    }

    return config_map.get(env, DevelopmentConfig)
