"""Command-line interface."""

from app.api.cli import build_parser, cli_dispatch

__all__ = [
    "build_parser",
    "cli_dispatch",
]
