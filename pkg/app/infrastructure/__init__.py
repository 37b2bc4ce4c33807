"""Infrastructure module."""

