"""Error hierarchy for maglt.

Every failure that should reach the command line with a specific exit code
derives from MagLTError. Plain argument validation on direct library calls
keeps using ValueError.
"""

from __future__ import annotations

from typing import Any


class MagLTError(RuntimeError):
    """Base class for errors that carry an exit code and a diagnostic."""

    exit_code = 1
    kind = "error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def diagnostic(self) -> dict[str, Any]:
        """Return a JSON-ready description of the failure."""
        payload: dict[str, Any] = {"error": self.kind, "message": self.message}
        payload.update({k: _plain(v) for k, v in self.details.items()})
        return payload


class ConfigError(MagLTError):
    """Raised when an experiment configuration violates the schema."""

    exit_code = 2
    kind = "config"

    def __init__(self, message: str, key: str | None = None, **details: Any) -> None:
        super().__init__(message, key=key, **details)
        self.key = key


class BudgetExceeded(MagLTError):
    """Raised when a requested computation exceeds the desk-scale budget."""

    exit_code = 3
    kind = "budget"


class ResolutionError(BudgetExceeded):
    """Raised when a grid cannot resolve the magnetic length or the potential."""

    kind = "resolution"


class NumericalFailure(MagLTError):
    """Raised when a numerical routine does not reach its tolerance."""

    exit_code = 4
    kind = "numerical"


class QuadratureError(NumericalFailure):
    """Raised when an adaptive quadrature does not converge."""

    kind = "quadrature"


class ChartError(NumericalFailure):
    """Raised when a point lies outside a field-line chart."""

    kind = "chart"


class RegularityError(NumericalFailure):
    """Raised when a field fails a regularity requirement."""

    kind = "regularity"


class SolverError(NumericalFailure):
    """Raised when an eigensolver fails or its count cannot be certified."""

    kind = "solver"


def _plain(value: Any) -> Any:
    """Convert numpy scalars and tuples into JSON-friendly values."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    return value
