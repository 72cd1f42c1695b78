"""Banner utilities for the CLI."""

import sys

from rich import print as rprint

LOGO = r"""
[bold cyan]
███╗   ███╗ █████╗  ██████╗       ██╗     ████████╗
████╗ ████║██╔══██╗██╔════╝       ██║     ╚══██╔══╝
██╔████╔██║███████║██║  ███╗█████╗██║        ██║
██║╚██╔╝██║██╔══██║██║   ██║╚════╝██║        ██║
██║ ╚═╝ ██║██║  ██║╚██████╔╝      ███████╗   ██║
╚═╝     ╚═╝╚═╝  ╚═╝ ╚═════╝       ╚══════╝   ╚═╝
[/]
[dim]MAG-LT • magnetic scales and Lieb–Thirring checks for Pauli operators[/]
"""


def opt_print_banner() -> None:
    """
    Print the MAG-LT banner if help is requested.
    Example: `maglt --help` or `maglt spectrum --help`.
    """
    if any(arg in ("--help", "-h") for arg in sys.argv):
        rprint(LOGO)
