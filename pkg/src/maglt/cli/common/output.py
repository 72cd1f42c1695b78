"""Rich rendering of run progress messages, step tables and summaries."""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from rich.console import Console
from rich.table import Table
from rich.theme import Theme

from maglt.core.experiments import StepRecord

_THEME = Theme(
    {
        "passed": "bold green",
        "failed": "yellow",
        "broken": "bold red",
        "step": "bold cyan",
        "key": "dim",
    }
)

console = Console(theme=_THEME)

_STATUS_STYLE = {"ok": "passed", "checks-failed": "failed", "error": "broken"}


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if value is None:
        return "-"
    return str(value)


@dataclass(frozen=True)
class Out:
    """Messages, key/value listings and step tables on the themed console."""

    def info(self, msg: str) -> None:
        console.print(f"[step]›[/] {msg}")

    @contextmanager
    def status(self, msg: str):
        """Spinner shown while a config loads or validates."""
        with console.status(msg, spinner="dots"):
            yield

    def success(self, msg: str) -> None:
        console.print(f"[passed]✓[/] {msg}")

    def warn(self, msg: str) -> None:
        console.print(f"[failed]⚠[/] {msg}")

    def error(self, msg: str) -> None:
        console.print(f"[broken]✗[/] {msg}")

    def kv(self, items: Mapping[str, Any]) -> None:
        for k, v in items.items():
            console.print(f"[key]{k}[/]: {_fmt(v)}")

    def steps_table(self, records: Iterable[StepRecord], title: str = "Steps") -> None:
        """One row per finished step with its status and artifacts."""
        t = Table(title=title)
        t.add_column("Step", style="step", no_wrap=True)
        t.add_column("Status")
        t.add_column("Seconds", justify="right")
        t.add_column("Artifacts", style="key")
        for r in records:
            style = _STATUS_STYLE.get(r.status, "key")
            t.add_row(r.name, f"[{style}]{r.status}[/]", f"{r.seconds:.2f}", ", ".join(r.artifacts))
        console.print(t)

    def summary_table(self, record: StepRecord) -> None:
        """Headline numbers of one step."""
        t = Table(title=f"{record.name} summary", show_header=False)
        t.add_column("Key", style="key")
        t.add_column("Value")
        for k, v in record.summary.items():
            t.add_row(k, _fmt(v))
        console.print(t)


out = Out()
