"""Run the full data pipeline from one config: extract through analyze.

Equivalent to calling the extract, synthesize, verify, and analyze
subcommands in order; stops at the first failing stage.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from refground.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True, type=Path)
    args = parser.parse_args()
    for command in ("extract", "synthesize", "verify", "analyze"):
        code = cli_main([command, "--config", str(args.config)])
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
