"""Score a predictions file against the accepted triplets of a run.

Thin wrapper over the evaluate subcommand; writes eval.csv and ss.csv
into the configured output directory.
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
    parser.add_argument("--predictions", required=True, type=Path)
    args = parser.parse_args()
    return cli_main(
        [
            "evaluate",
            "--config",
            str(args.config),
            "--predictions",
            str(args.predictions),
        ]
    )


if __name__ == "__main__":
    sys.exit(main())
