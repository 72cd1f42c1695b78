"""Progress formatting utilities for the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from rich.console import Console, Group
from rich.live import Live
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
    TimeElapsedColumn,
)

from maglt.core.config import ExperimentConfig
from maglt.core.experiments import RunManifest, StepRecord, run

console = Console(stderr=True)


def _style_for(status: str) -> str:
    if status == "ok":
        return "green"
    if status == "error":
        return "red"
    if status == "checks-failed":
        return "yellow"
    return "dim"


def run_with_progress(
    config: ExperimentConfig,
    steps: Sequence[str],
    output_dir: Path | None = None,
) -> RunManifest:
    """
    Run the steps while showing:
      - an overall progress bar (x/y steps + failed checks)
      - per-step spinner rows with elapsed timers (stops per step when finished)
    """
    overall = Progress(
        TextColumn("[bold]Overall[/]"),
        BarColumn(),
        TaskProgressColumn(),
        TextColumn("failed=[bold red]{task.fields[failed]}[/]"),
        TimeElapsedColumn(),
        console=console,
    )
    per_step = Progress(
        SpinnerColumn(),
        TextColumn("[bold]{task.fields[step]}[/]"),
        TextColumn("status=[{task.fields[style]}]{task.fields[status]}[/{task.fields[style]}]"),
        TimeElapsedColumn(),
        console=console,
    )
    overall_id = overall.add_task("overall", total=max(len(steps), 1), failed=0)
    # started on completion of the previous step so elapsed times do not overlap
    task_ids = {
        name: per_step.add_task("", total=1, start=False, step=name, status="PENDING", style="dim")
        for name in steps
    }
    failed = 0
    order = list(steps)

    def on_step(record: StepRecord) -> None:
        nonlocal failed
        per_step.update(task_ids[record.name], status=record.status, style=_style_for(record.status), completed=1)
        if record.status != "ok":
            failed += 1
            overall.update(overall_id, failed=failed)
        overall.advance(overall_id, 1)
        position = order.index(record.name) + 1
        if position < len(order):
            nxt = task_ids[order[position]]
            per_step.start_task(nxt)
            per_step.update(nxt, status="RUNNING", style="yellow")

    if order:
        per_step.start_task(task_ids[order[0]])
        per_step.update(task_ids[order[0]], status="RUNNING", style="yellow")

    with Live(Group(overall, per_step), console=console, refresh_per_second=10, transient=True):
        return run(config, steps=order, output_dir=output_dir, on_step=on_step)
