"""Generate the bundled synthetic corpus: 5 datasets x 10 images.

Writes images, masks, and manifest.jsonl under the target directory.
The corpus is fully determined by the seed, so two runs into different
directories produce byte-identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from refground.fixtures import make_corpus


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir", type=Path, help="corpus root directory")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    manifest = make_corpus(args.out_dir, seed=args.seed)
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
