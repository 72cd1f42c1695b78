"""CLI entrypoints for maglt."""

from .cli import app

__all__ = ["app"]
