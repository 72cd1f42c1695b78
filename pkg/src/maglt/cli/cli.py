"""CLI application for magnetic scale and Lieb–Thirring experiments."""

import typer

from maglt.cli.commands.experiments import STEP_HELP, run_command, step_command, validate_command
from maglt.cli.common.banner import opt_print_banner
from maglt.cli.common.context import build_app_context
from maglt.cli.common.options import ThreadsOpt, VerboseOpt
from maglt.core.config import STEP_NAMES

opt_print_banner()

app = typer.Typer(
    help="Magnetic scales, covers and Lieb–Thirring checks for Pauli operators",
    no_args_is_help=True,
)


@app.callback()
def _init(
    ctx: typer.Context,
    verbose: int = VerboseOpt,
    threads: int | None = ThreadsOpt,
):
    """Configure logging and the worker cap for this invocation."""
    ctx.obj = build_app_context(verbose, threads)


app.command("run", help="Run the steps listed in the config.")(run_command)
app.command("validate", help="Validate a config and print its hash.")(validate_command)

for _step in STEP_NAMES:
    app.command(_step, help=STEP_HELP[_step])(step_command(_step))


if __name__ == "__main__":
    app()
