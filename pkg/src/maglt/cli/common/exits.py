"""Exit handling utilities for the CLI."""

import json
from typing import NoReturn

import typer

from maglt.cli.common.output import out
from maglt.core.errors import ConfigError, MagLTError


def ok_exit(msg: str | None = None) -> "None":
    """Exit successfully with an optional informational message."""
    if msg:
        out.info(msg)
    raise typer.Exit(0)


def warn_exit(msg: str, code: int = 0) -> "None":
    """Exit with a warning message and optional exit code."""
    out.warn(msg)
    raise typer.Exit(code)


def exit_from_exc(exc: Exception, *, message: str, code: int = 1) -> NoReturn:
    """Print an error message and exit with the given code, chaining exc."""
    out.error(message)
    raise typer.Exit(code) from exc


def exit_for_error(exc: Exception) -> NoReturn:
    """
    Exit with the code of a maglt error and its diagnostic as JSON on stderr.

    ConfigError and ValueError exit with 2, BudgetExceeded with 3 and
    NumericalFailure with 4.
    """
    if isinstance(exc, MagLTError):
        diagnostic, code = exc.diagnostic(), exc.exit_code
    elif isinstance(exc, ValueError):
        diagnostic, code = {"error": "value", "message": str(exc)}, ConfigError.exit_code
    else:
        raise exc
    key = diagnostic.get("key")
    typer.echo(json.dumps(diagnostic, sort_keys=True, ensure_ascii=False), err=True)
    exit_from_exc(exc, message=f"{diagnostic['message']} ({key})" if key else diagnostic["message"], code=code)
