"""Monitoring and metrics using Prometheus."""
import logging
import time
from contextlib import contextmanager
from typing import Iterator, Optional

from prometheus_client import Counter, Gauge, Histogram, start_http_server

from app.config.settings import Config

logger = logging.getLogger(__name__)

# Prometheus metrics
episodes_generated_total = Counter(
    'worldmodel_episodes_generated_total',
    'Total number of episodes written to datasets',
    ['split']
)

training_steps_total = Counter(
    'worldmodel_training_steps_total',
    'Total number of optimizer updates',
    ['mode']
)

training_loss = Gauge(
    'worldmodel_training_loss',
    'Most recent training loss components',
    ['component']
)

gradient_norm = Gauge(
    'worldmodel_gradient_norm',
    'Global gradient norm of the most recent update'
)

rollout_duration = Histogram(
    'worldmodel_rollout_duration_seconds',
    'Time spent predicting one batch of next frames',
    ['model'],
    buckets=[0.05, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0]
)

planning_episodes_total = Counter(
    'worldmodel_planning_episodes_total',
    'Total number of MPC episodes',
    ['policy', 'outcome']
)

_exporter_started = False


def start_metrics_exporter(port: Optional[int] = None) -> bool:
    """
    Start the Prometheus HTTP exporter once per process.

    Args:
        port: Port to bind (defaults to METRICS_PORT)

    Returns:
        True if an exporter is running
    """
    global _exporter_started
    port = port or Config.METRICS_PORT
    if not Config.ENABLE_METRICS or port is None:
        return False
    if _exporter_started:
        return True
    try:
        start_http_server(port)
        _exporter_started = True
        logger.info(f"Prometheus metrics exported on port {port}")
    except OSError as e:
        logger.warning(f"Could not start metrics exporter on port {port}: {e}")
    return _exporter_started


def track_episode_generated(split: str) -> None:
    try:
        if Config.ENABLE_METRICS:
            episodes_generated_total.labels(split=split).inc()
    except Exception as e:
        # Don't fail if metrics tracking fails
        logger.debug(f"Failed to track episode metrics: {e}")


def track_training_step(mode: str, total: float, diffusion: float, flow: float, grad_norm: float) -> None:
    """
    Track one optimizer update.

    Args:
        mode: Training mode label
        total: L_total
        diffusion: L_diff
        flow: L_flow (0 for vanilla)
        grad_norm: Global gradient norm
    """
    try:
        if Config.ENABLE_METRICS:
            training_steps_total.labels(mode=mode).inc()
            training_loss.labels(component="total").set(total)
            training_loss.labels(component="diffusion").set(diffusion)
            training_loss.labels(component="flow").set(flow)
            gradient_norm.set(grad_norm)
    except Exception as e:
        logger.debug(f"Failed to track training metrics: {e}")


def track_planning_episode(policy: str, success: bool) -> None:
    try:
        if Config.ENABLE_METRICS:
            outcome = "success" if success else "failure"
            planning_episodes_total.labels(policy=policy, outcome=outcome).inc()
    except Exception as e:
        logger.debug(f"Failed to track planning metrics: {e}")


@contextmanager
def track_rollout(model: str) -> Iterator[None]:
    """Time a block of prediction work under the given model label."""
    start_time = time.time()
    try:
        yield
    finally:
        try:
            if Config.ENABLE_METRICS:
                rollout_duration.labels(model=model).observe(time.time() - start_time)
        except Exception as e:
            logger.debug(f"Failed to track rollout metrics: {e}")
