"""Application layer - use cases and application services."""

