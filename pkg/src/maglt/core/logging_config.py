"""Logging setup shared by the maglt core.

Set MAGLT_LOG_LEVEL=DEBUG for per-iteration numerics on stderr.
"""

from __future__ import annotations

import logging
import os

from rich.console import Console
from rich.logging import RichHandler

_LOG_LEVEL_ENV = "MAGLT_LOG_LEVEL"
_ROOT = "maglt"
_configured = False


def _level_from_env() -> int:
    raw = os.getenv(_LOG_LEVEL_ENV, "WARNING").strip().upper()
    level = logging.getLevelName(raw)
    return level if isinstance(level, int) else logging.WARNING


def configure_logging(level: int | str | None = None) -> None:
    """Attach a rich handler to the package logger.

    Args:
        level: Explicit level; when omitted the level comes from MAGLT_LOG_LEVEL.
    """
    global _configured
    root = logging.getLogger(_ROOT)
    if not _configured:
        handler = RichHandler(
            console=Console(stderr=True),
            show_path=False,
            rich_tracebacks=False,
        )
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        root.addHandler(handler)
        root.propagate = False
        _configured = True
    if level is None:
        root.setLevel(_level_from_env())
    else:
        root.setLevel(level)


def get_logger(name: str) -> logging.Logger:
    """Return a logger under the maglt namespace."""
    if not _configured:
        configure_logging()
    if not name.startswith(_ROOT):
        name = f"{_ROOT}.{name}"
    return logging.getLogger(name)
