"""Common CLI options for the CLI."""

import typer

ConfigArg = typer.Argument(
    ...,
    exists=True,
    dir_okay=False,
    help="Experiment config (TOML)",
)

OutOpt = typer.Option(
    None,
    "--out",
    "-o",
    file_okay=False,
    help="Output directory (overrides output_dir; relative paths resolve under MAGLT_OUTPUT_ROOT)",
)

StepOpt = typer.Option(
    [],
    "--step",
    "-s",
    help="Step to run (repeatable); defaults to run.steps of the config",
    show_default=False,
)

JsonOpt = typer.Option(
    False,
    "--json",
    help="Print the manifest as JSON instead of tables",
)

DeterministicOpt = typer.Option(
    False,
    "--deterministic",
    help="Run single-threaded so that reports are byte-identical across runs",
)

VerboseOpt = typer.Option(
    0,
    "--verbose",
    "-v",
    count=True,
    help="Log progress to stderr (-v for INFO, -vv for DEBUG)",
)

ThreadsOpt = typer.Option(
    None,
    "--threads",
    min=1,
    help="Worker cap for intra-step parallelism (default: MAGLT_THREADS or 4)",
)

LocalFieldsOpt = typer.Option(
    None,
    "--with-local-fields",
    min=1,
    help="Report local-field diagnostics for N balls (overrides cover.local_fields)",
)
