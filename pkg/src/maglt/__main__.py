from __future__ import annotations

from maglt.cli import app

if __name__ == "__main__":
    app()
