"""Middleware module."""

