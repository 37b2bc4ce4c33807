"""Factories for creating rollout models and repositories (Factory Pattern)."""

from app.infrastructure.factories.rollout_factory import POLICIES, RolloutFactory

__all__ = [
    "POLICIES",
    "RolloutFactory",
]
