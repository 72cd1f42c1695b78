"""Commands that run experiment steps from a config."""

from contextlib import nullcontext
from pathlib import Path
from typing import Any, Callable, Sequence

import typer

from maglt.cli.common.context import AppContext, load_for_run
from maglt.cli.common.exits import exit_for_error, ok_exit, warn_exit
from maglt.cli.common.options import ConfigArg, DeterministicOpt, JsonOpt, LocalFieldsOpt, OutOpt, StepOpt
from maglt.cli.common.output import out
from maglt.cli.common.progress import run_with_progress
from maglt.core.config import STEP_NAMES
from maglt.core.errors import MagLTError
from maglt.core.experiments import RunManifest, dumps_report, run

STEP_HELP = {
    "scales": "Scale functions L_m, L_v, L_c, ℓ and pressure over a grid of points.",
    "cover": "Ball cover, partition of unity and coloring with coverage checks.",
    "geometry": "Field-line frame, chart self-test and magnetic localization residual.",
    "bounds": "Landau pressure table and bound breakdown sweeps.",
    "const-field": "Constant-field resolvent and heat kernel checks.",
    "spectrum": "Discrete Pauli spectrum on the configured box.",
    "verify-lt": "Compare Tr H₋ with the bound over an amplitude sweep.",
    "zero-modes": "Near-zero modes of the Dirac square and density ratios.",
    "opineq": "Randomized operator inequality tests.",
}


def _execute(
    ctx: typer.Context,
    config_path: Path,
    steps: Sequence[str],
    output_dir: Path | None,
    deterministic: bool,
    as_json: bool,
    cover: dict[str, Any] | None = None,
) -> None:
    appctx: AppContext | None = ctx.obj
    try:
        config = load_for_run(appctx, config_path, deterministic=deterministic)
        if cover:
            config = config.model_copy(update={"cover": config.cover.model_copy(update=cover)})
        chosen = list(steps) or list(config.run.steps)
        if as_json:
            manifest = run(config, steps=chosen, output_dir=output_dir)
        else:
            out.info(f"Running {', '.join(chosen) or 'no steps'} from {config_path}")
            manifest = run_with_progress(config, chosen, output_dir)
    except (MagLTError, ValueError) as exc:
        exit_for_error(exc)

    _report(manifest, as_json)


def _report(manifest: RunManifest, as_json: bool) -> None:
    if as_json:
        typer.echo(dumps_report(manifest.to_dict()), nl=False)
    else:
        out.steps_table(manifest.steps, title="Steps")
        for record in manifest.steps:
            if record.summary:
                out.summary_table(record)
        out.kv({"output": manifest.output_dir, "config_hash": manifest.config_hash})

    failed = [r.name for r in manifest.steps if r.status != "ok"]
    if failed:
        warn_exit(f"Checks failed in: {', '.join(failed)}", code=1)
    if not as_json:
        out.success("All checks passed")


def run_command(
    ctx: typer.Context,
    config: Path = ConfigArg,
    step: list[str] = StepOpt,
    output: Path | None = OutOpt,
    deterministic: bool = DeterministicOpt,
    as_json: bool = JsonOpt,
):
    """
    Run the steps listed in run.steps (or the given --step values).
    """
    _execute(ctx, config, step, output, deterministic, as_json)


def validate_command(
    config: Path = ConfigArg,
    as_json: bool = JsonOpt,
):
    """
    Validate a config without running anything.
    """
    try:
        with nullcontext() if as_json else out.status(f"Validating {config}"):
            loaded = load_for_run(None, config)
    except (MagLTError, ValueError) as exc:
        exit_for_error(exc)

    summary = {
        "config_hash": loaded.config_hash(),
        "steps": list(loaded.run.steps),
        "field": loaded.field.name,
        "potential": loaded.potential.name,
        "epsilon": loaded.epsilon,
        "output_dir": str(loaded.resolved_output_dir()),
    }
    if as_json:
        typer.echo(dumps_report(summary), nl=False)
        raise typer.Exit(0)
    out.kv(summary)
    ok_exit("Config is valid")


def step_command(name: str) -> Callable[..., None]:
    """Build the command that runs the single step ``name``."""
    if name not in STEP_NAMES:
        raise ValueError(f"unknown step '{name}'")
    if name == "cover":
        return cover_command

    def command(
        ctx: typer.Context,
        config: Path = ConfigArg,
        output: Path | None = OutOpt,
        deterministic: bool = DeterministicOpt,
        as_json: bool = JsonOpt,
    ):
        _execute(ctx, config, [name], output, deterministic, as_json)

    command.__doc__ = STEP_HELP[name]
    command.__name__ = f"{name.replace('-', '_')}_command"
    return command


def cover_command(
    ctx: typer.Context,
    config: Path = ConfigArg,
    output: Path | None = OutOpt,
    deterministic: bool = DeterministicOpt,
    as_json: bool = JsonOpt,
    local_fields: int | None = LocalFieldsOpt,
):
    """
    Ball cover, partition of unity and coloring with coverage checks.
    """
    overrides = {"local_fields": local_fields} if local_fields else None
    _execute(ctx, config, ["cover"], output, deterministic, as_json, overrides)
