"""Error handling with Sentry integration and exit-code mapping."""
import logging
from typing import Optional

from app.config.settings import Config
from app.domain.exceptions import CliUsageError, DataError, WorldModelError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_FAILURE = 3

_sentry_initialized = False


def init_error_tracking(environment: Optional[str] = None) -> bool:
    """
    Initialize Sentry if a DSN is configured.

    Args:
        environment: Environment tag reported to Sentry

    Returns:
        True if Sentry is active
    """
    global _sentry_initialized
    if _sentry_initialized:
        return True
    if not Config.SENTRY_DSN:
        return False
    try:
        import sentry_sdk

        sentry_sdk.init(
            dsn=Config.SENTRY_DSN,
            traces_sample_rate=0.1,
            environment=environment or ("development" if Config.DEBUG else "production"),
        )
        _sentry_initialized = True
        logger.info("Sentry error tracking initialized")
    except ImportError:
        logger.warning("Sentry SDK not installed, skipping Sentry initialization")
    return _sentry_initialized


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, CliUsageError):
        return EXIT_USAGE
    if isinstance(error, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_FAILURE


def handle_exception(error: BaseException) -> int:
    """
    Log an exception, report unexpected ones to Sentry, and return its exit code.

    Args:
        error: The exception that ended the command

    Returns:
        Process exit code
    """
    code = exit_code_for(error)
    if code == EXIT_USAGE:
        logger.error(f"Usage error: {error}")
    elif code == EXIT_DATA:
        logger.error(f"Data error: {error}")
    elif isinstance(error, WorldModelError):
        logger.error(f"Command failed: {error}", exc_info=error)
    else:
        logger.error(f"Unhandled exception: {error}", exc_info=error)
    if code == EXIT_FAILURE and _sentry_initialized:
        try:
            import sentry_sdk

            sentry_sdk.capture_exception(error)
        except Exception as e:
            logger.debug(f"Failed to report exception to Sentry: {e}")
    return code
