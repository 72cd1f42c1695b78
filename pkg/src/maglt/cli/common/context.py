"""Application context management for the CLI."""

import logging
from dataclasses import dataclass
from pathlib import Path

from maglt.core.config import ExperimentConfig, load_config
from maglt.core.logging_config import configure_logging


@dataclass
class AppContext:
    """Options shared by every command of one invocation."""

    verbosity: int
    threads: int | None


def build_app_context(verbosity: int, threads: int | None) -> AppContext:
    """Configure logging for the requested verbosity and return the context.

    Args:
        verbosity: Number of -v flags; 0 keeps MAGLT_LOG_LEVEL.
        threads: Worker cap from --threads, or None.
    """
    if verbosity >= 2:
        configure_logging(logging.DEBUG)
    elif verbosity == 1:
        configure_logging(logging.INFO)
    else:
        configure_logging()
    return AppContext(verbosity=verbosity, threads=threads)


def load_for_run(appctx: AppContext | None, path: Path, *, deterministic: bool = False) -> ExperimentConfig:
    """Load a config and apply the command-line overrides."""
    config = load_config(path)
    update = {}
    if appctx is not None and appctx.threads is not None:
        update["threads"] = appctx.threads
    if deterministic:
        update["deterministic"] = True
    return config.model_copy(update=update) if update else config
