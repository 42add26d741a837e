"""Canonical geometry types and the triplet interchange format.

Every module exchanges data through the types defined here: pixel-space
boxes, grid-normalized boxes, image references, and the serialized
referring triplet (one JSON object per line).  Coordinate conventions:

* Pixel boxes are half-open: ``x_max``/``y_max`` are exclusive, so the
  box area is ``(x_max - x_min) * (y_max - y_min)`` with no off-by-one
  ambiguity.
* Normalized boxes live on a fixed 1000 x 1000 grid regardless of the
  source resolution.  Conversion rounds half away from zero; a box that
  collapses to zero width or height after rounding is widened by one
  grid unit rather than dropped, so sub-pixel structures survive.

All types are immutable value objects and all functions are pure, so
they are safe to use from any number of concurrent workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Mapping

GRID = 1000
MODALITIES = ("CT", "Ultrasound", "Dermoscopy", "Nuclei", "Bacteria")

# Verification stages in pipeline order; stage logs must follow it.
STAGE_FORMAT = "format"
STAGE_RULES = "rules"
STAGE_JUDGE = "judge"
STAGE_ORDER = (STAGE_FORMAT, STAGE_RULES, STAGE_JUDGE)

REASON_OK = "ok"

_TRIPLET_KEYS = (
    "id",
    "dataset",
    "image",
    "width",
    "height",
    "modality",
    "query",
    "boxes",
    "candidate_count",
    "generator",
    "stage_log",
)


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in pixel coordinates, max edges exclusive."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int


@dataclass(frozen=True)
class NormBox:
    """Axis-aligned box on the shared 1000 x 1000 grid."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class ImageRef:
    """Identity and geometry of one source image."""

    dataset: str
    path: str
    width: int
    height: int
    modality: str


@dataclass(frozen=True)
class StageEntry:
    """One verification stage result carried on a triplet."""

    stage: str
    passed: bool
    reason: str


@dataclass(frozen=True)
class ReferringTriplet:
    """One image / referring query / answer-box record with provenance."""

    id: str
    image: ImageRef
    query: str
    answer_boxes: tuple[NormBox, ...]
    candidate_count: int
    generator: str
    stage_log: tuple[StageEntry, ...]


def validate_pixel_box(box: PixelBox, width: int, height: int) -> None:
    """Raise ValueError naming the first violated pixel-box invariant."""
    if box.x_min < 0 or box.y_min < 0:
        raise ValueError(f"negative pixel coordinate in {box}")
    if box.x_min >= box.x_max or box.y_min >= box.y_max:
        raise ValueError(f"degenerate pixel box {box}")
    if box.x_max > width or box.y_max > height:
        raise ValueError(f"pixel box {box} exceeds image bounds {width}x{height}")


def validate_norm_box(box: NormBox) -> None:
    """Raise ValueError naming the first violated grid-box invariant."""
    for c in (box.x_min, box.y_min, box.x_max, box.y_max):
        if c < 0 or c > GRID:
            raise ValueError("box coordinate out of range")
    if box.x_min >= box.x_max or box.y_min >= box.y_max:
        raise ValueError(f"degenerate grid box {box}")


def scale_round_half_up(value: int, numerator: int, denominator: int) -> int:
    """Return value * numerator / denominator rounded half up, exactly."""
    # Integer form of floor(v * n / d + 1/2); no floating point involved.
    return (2 * value * numerator + denominator) // (2 * denominator)


def _repair_collapse(lo: int, hi: int, bound: int) -> tuple[int, int]:
    # Rounding may collapse a thin box; widen by one unit instead of dropping.
    if lo == hi:
        if hi < bound:
            hi += 1
        else:
            lo -= 1
    return lo, hi


def normalize_box(box: PixelBox, width: int, height: int) -> NormBox:
    """Map a pixel box onto the 1000-grid (round half up, collapse-repaired).

    Precondition: the pixel box satisfies its invariants against
    ``width`` and ``height``; this is checked where boxes are created.
    """
    x_min = scale_round_half_up(box.x_min, GRID, width)
    x_max = scale_round_half_up(box.x_max, GRID, width)
    y_min = scale_round_half_up(box.y_min, GRID, height)
    y_max = scale_round_half_up(box.y_max, GRID, height)
    x_min, x_max = _repair_collapse(x_min, x_max, GRID)
    y_min, y_max = _repair_collapse(y_min, y_max, GRID)
    return NormBox(x_min, y_min, x_max, y_max)


def denormalize_box(box: NormBox, width: int, height: int) -> PixelBox:
    """Map a grid box back to pixel coordinates for the given image size."""
    x_min = min(max(scale_round_half_up(box.x_min, width, GRID), 0), width)
    x_max = min(max(scale_round_half_up(box.x_max, width, GRID), 0), width)
    y_min = min(max(scale_round_half_up(box.y_min, height, GRID), 0), height)
    y_max = min(max(scale_round_half_up(box.y_max, height, GRID), 0), height)
    x_min, x_max = _repair_collapse(x_min, x_max, width)
    y_min, y_max = _repair_collapse(y_min, y_max, height)
    return PixelBox(x_min, y_min, x_max, y_max)


def serialize_triplet(
    triplet: ReferringTriplet, audit: Mapping[str, Any] | None = None
) -> str:
    """Render one triplet as a single JSONL line with fixed key order.

    The optional ``audit`` mapping is appended as a trailing block by the
    human-audit export; ordinary pipeline output never includes it.
    Serialization is deterministic: equal triplets produce identical bytes.
    """
    record: dict[str, Any] = {
        "id": triplet.id,
        "dataset": triplet.image.dataset,
        "image": triplet.image.path,
        "width": triplet.image.width,
        "height": triplet.image.height,
        "modality": triplet.image.modality,
        "query": triplet.query,
        "boxes": [b.as_list() for b in triplet.answer_boxes],
        "candidate_count": triplet.candidate_count,
        "generator": triplet.generator,
        "stage_log": [[s.stage, s.passed, s.reason] for s in triplet.stage_log],
    }
    if audit is not None:
        record["audit"] = dict(audit)
    return json.dumps(record, separators=(",", ":"), ensure_ascii=False)


def _require_str(record: Mapping[str, Any], key: str) -> str:
    value = record[key]
    if not isinstance(value, str):
        raise ValueError(f"field {key} must be a string")
    return value


def _require_positive_int(record: Mapping[str, Any], key: str) -> int:
    value = record[key]
    if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
        raise ValueError(f"field {key} must be a positive integer")
    return value


def _parse_box(raw: Any) -> NormBox:
    if (
        not isinstance(raw, list)
        or len(raw) != 4
        or any(not isinstance(c, int) or isinstance(c, bool) for c in raw)
    ):
        raise ValueError(f"box must be a list of four integers, got {raw!r}")
    box = NormBox(raw[0], raw[1], raw[2], raw[3])
    validate_norm_box(box)
    return box


def _parse_stage_log(raw: Any) -> tuple[StageEntry, ...]:
    if not isinstance(raw, list):
        raise ValueError("stage_log must be a list")
    entries: list[StageEntry] = []
    for item in raw:
        if (
            not isinstance(item, list)
            or len(item) != 3
            or not isinstance(item[0], str)
            or not isinstance(item[1], bool)
            or not isinstance(item[2], str)
        ):
            raise ValueError(f"malformed stage_log entry {item!r}")
        if item[1] and item[2] != REASON_OK:
            raise ValueError(f"passed stage {item[0]} must carry reason {REASON_OK!r}")
        entries.append(StageEntry(item[0], item[1], item[2]))
    positions = [STAGE_ORDER.index(e.stage) for e in entries if e.stage in STAGE_ORDER]
    if len(positions) != len(entries) or positions != sorted(set(positions)):
        raise ValueError("stage_log stages out of pipeline order")
    return tuple(entries)


def parse_triplet(line: str) -> ReferringTriplet:
    """Parse one JSONL line, validating every triplet invariant.

    Raises ValueError naming the first violated invariant.  An optional
    trailing ``audit`` block (written by the audit export) is tolerated
    and ignored; any other unknown key is rejected.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    for key in _TRIPLET_KEYS:
        if key not in record:
            raise ValueError(f"missing key: {key}")
    for key in record:
        if key not in _TRIPLET_KEYS and key != "audit":
            raise ValueError(f"unexpected key: {key}")

    triplet_id = _require_str(record, "id")
    if not triplet_id:
        raise ValueError("empty id")
    query = _require_str(record, "query")
    if not query:
        raise ValueError("empty query")
    modality = _require_str(record, "modality")
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality: {modality}")

    image = ImageRef(
        dataset=_require_str(record, "dataset"),
        path=_require_str(record, "image"),
        width=_require_positive_int(record, "width"),
        height=_require_positive_int(record, "height"),
        modality=modality,
    )

    raw_boxes = record["boxes"]
    if not isinstance(raw_boxes, list) or not raw_boxes:
        raise ValueError("empty answer_boxes")
    boxes = tuple(_parse_box(b) for b in raw_boxes)

    candidate_count = _require_positive_int(record, "candidate_count")
    if len(boxes) > candidate_count:
        raise ValueError("answer_boxes longer than candidate_count")

    return ReferringTriplet(
        id=triplet_id,
        image=image,
        query=query,
        answer_boxes=boxes,
        candidate_count=candidate_count,
        generator=_require_str(record, "generator"),
        stage_log=_parse_stage_log(record["stage_log"]),
    )


def read_audit_block(line: str) -> dict[str, Any] | None:
    """Return the audit block of a serialized triplet line, if present."""
    record = json.loads(line)
    audit = record.get("audit")
    if audit is not None and not isinstance(audit, dict):
        raise ValueError("audit block must be an object")
    return audit


def ratio_text(value: Fraction, places: int) -> str:
    """Format a non-negative fraction with fixed decimals, rounding half up.

    Pure integer arithmetic, so ties round predictably on every platform
    (``round`` alone would round half to even).
    """
    scaled = value * 10**places
    units, remainder = divmod(scaled.numerator, scaled.denominator)
    if 2 * remainder >= scaled.denominator:
        units += 1
    if places == 0:
        return str(units)
    whole, frac = divmod(units, 10**places)
    return f"{whole}.{frac:0{places}d}"


def percent_text(numerator: int, denominator: int, places: int) -> str:
    """Format ``numerator / denominator`` as a percentage string."""
    if denominator == 0:
        return ratio_text(Fraction(0), places)
    return ratio_text(Fraction(100 * numerator, denominator), places)
