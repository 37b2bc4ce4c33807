"""Process bootstrap: logging, error tracking and the optional metrics exporter."""
import logging
import sys
from typing import Optional, Type

from app.config.settings import Config, get_config
from app.middleware.error_handler import init_error_tracking
from app.middleware.monitoring import start_metrics_exporter


def configure_logging(level: Optional[str] = None) -> None:
    """Configure application logging (stdout, one format for every module)."""
    level_name = (level or Config.LOG_LEVEL or ("DEBUG" if Config.DEBUG else "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stdout,
        force=True,
    )


def init_app(config_class: Optional[Type[Config]] = None, start_exporter: bool = False) -> Type[Config]:
    """
    Prepare the process for a command.

    Args:
        config_class: Optional configuration class (for testing)
        start_exporter: Start the Prometheus exporter when METRICS_PORT is set

    Returns:
        The active configuration class
    """
    config = config_class or get_config()
    configure_logging(config.LOG_LEVEL)
    logger = logging.getLogger(__name__)
    try:
        config.validate()
    except ValueError as e:
        logger.warning(f"Configuration validation warning: {e}")

    init_error_tracking()
    if start_exporter and config.ENABLE_METRICS:
        start_metrics_exporter(config.METRICS_PORT)
    logger.debug(f"Configuration {config.__name__} active")
    return config
