# app.py
"""Entry point: python app.py <subcommand> --config run.yaml (see core/cli.py)."""
import sys

from core.cli import main

if __name__ == "__main__":
    sys.exit(main())
