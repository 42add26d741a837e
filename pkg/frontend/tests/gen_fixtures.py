"""Generate a ten-triplet audit fixture set for the end-to-end test.

Writes triplets.jsonl plus one PNG per triplet under the directory
given as the sole argument.  Every triplet carries a passing stage log
so the set is exactly what the audit server expects to serve.
"""

from __future__ import annotations

import sys
from pathlib import Path

from PIL import Image

SRC = Path(__file__).resolve().parents[2] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from refground.core import (  # noqa: E402
    ImageRef,
    NormBox,
    ReferringTriplet,
    StageEntry,
    serialize_triplet,
)

WIDTH = 64
HEIGHT = 64
STAGES = ("format", "rules", "judge")


def make_triplet(index: int) -> ReferringTriplet:
    dataset = "alpha" if index < 5 else "beta"
    tid = f"t{index:02d}"
    span = 80 + 60 * index
    box = NormBox(50 + 20 * index, 50 + 10 * index, 50 + 20 * index + span, 50 + 10 * index + span)
    return ReferringTriplet(
        id=tid,
        image=ImageRef(
            dataset=dataset,
            path=f"images/{tid}.png",
            width=WIDTH,
            height=HEIGHT,
            modality="CT",
        ),
        query=f"round lesion {index} in the upper left region",
        answer_boxes=(box,),
        candidate_count=1,
        generator="mock",
        stage_log=tuple(StageEntry(stage=s, passed=True, reason="ok") for s in STAGES),
    )


def write_image(path: Path, index: int) -> None:
    image = Image.new("L", (WIDTH, HEIGHT), color=16)
    block = 8 + index
    for y in range(4, 4 + block):
        for x in range(4, 4 + block):
            image.putpixel((x, y), 200)
    image.save(path)


def main() -> int:
    out_dir = Path(sys.argv[1])
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    triplets = [make_triplet(i) for i in range(10)]
    for i, triplet in enumerate(triplets):
        write_image(out_dir / triplet.image.path, i)
    lines = [serialize_triplet(t) for t in triplets]
    (out_dir / "triplets.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(len(triplets))
    return 0


if __name__ == "__main__":
    sys.exit(main())
