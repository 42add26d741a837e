"""Segmentation-mask decoding and candidate-box derivation.

A mask is a single-channel image whose nonzero pixels mark annotated
structures.  ``binary`` masks carry one foreground class and instances
are separated by connectivity; ``labeled`` masks carry one distinct
integer per instance and connectivity never merges across labels.
Each surviving component yields a tight bounding box on the shared
grid plus geometric attributes (size bucket, centroid bins, shape
proxies) that drive query synthesis and rule verification.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np
from PIL import Image
from scipy import ndimage

from refground.core import (
    ImageRef,
    NormBox,
    PixelBox,
    normalize_box,
    validate_norm_box,
    validate_pixel_box,
)

MASK_MODES = ("binary", "labeled")

SIZE_BUCKETS = ("tiny", "small", "medium", "large")
# Area-ratio cut points: tiny < 0.5%, small < 2%, medium < 10%, large above.
TINY_BELOW = 0.005
SMALL_BELOW = 0.02
MEDIUM_BELOW = 0.10

HORIZ_BINS = ("left", "center", "right")
VERT_BINS = ("upper", "middle", "lower")
# Centroid dead band: lateral bins only outside [0.4, 0.6].
BIN_LOW = 0.4
BIN_HIGH = 0.6

DEFAULT_CONNECTIVITY = 8
DEFAULT_MIN_COMPONENT_PIXELS = 4

Pixel = tuple[int, int]  # (y, x)


@dataclass(frozen=True, eq=False)
class InstanceMask:
    """Decoded mask grid; ``labels`` is (height, width), 0 = background."""

    width: int
    height: int
    labels: np.ndarray
    mode: str


@dataclass(frozen=True)
class RegionAttributes:
    """Geometry and coarse spatial descriptors of one component."""

    area_ratio: float
    width_px: int
    height_px: int
    aspect_ratio: float
    elongation: float
    compactness: float
    centroid_x: float
    centroid_y: float
    horiz_bin: str
    vert_bin: str
    size_bucket: str


@dataclass(frozen=True)
class Component:
    """One connected pixel set; label is the source mask value."""

    label: int
    pixels: frozenset[Pixel]


@dataclass(frozen=True)
class PoolEntry:
    box: NormBox
    attributes: RegionAttributes


@dataclass(frozen=True)
class CandidatePool:
    """Ordered ground-truth boxes for one image, stable across runs."""

    image: ImageRef
    entries: tuple[PoolEntry, ...]
    mask_mode: str


def decode_mask(data: bytes, mode: str) -> InstanceMask:
    """Decode single-channel mask bytes into an instance grid.

    ``binary`` collapses every nonzero sample to label 1; ``labeled``
    preserves distinct values as instance labels.
    """
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode: {mode}")
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise ValueError(f"unreadable mask file: {exc}") from exc
    if len(img.getbands()) != 1:
        raise ValueError(f"multi-channel mask image (bands: {''.join(img.getbands())})")
    width, height = img.size
    if width == 0 or height == 0:
        raise ValueError("zero-area mask image")
    raw = np.asarray(img).astype(np.int32).reshape(height, width)
    if raw.min() < 0:
        raise ValueError("negative mask label")
    labels = (raw != 0).astype(np.int32) if mode == "binary" else raw
    return InstanceMask(width=width, height=height, labels=labels, mode=mode)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def connected_components(
    mask: InstanceMask, connectivity: int = DEFAULT_CONNECTIVITY
) -> list[Component]:
    """Split the foreground into maximal connected components.

    Labeled masks are processed per label so touching instances never
    merge.  Output is ordered by (min row, then min column) of each
    component, which makes candidate indices stable across runs.
    """
    structure = _structure(connectivity)
    values = np.unique(mask.labels)
    values = values[values > 0]
    if values.size == 0:
        raise ValueError("empty mask")
    components: list[Component] = []
    for value in values.tolist():
        grouped, count = ndimage.label(mask.labels == value, structure=structure)
        for index in range(1, count + 1):
            coords = np.argwhere(grouped == index)
            pixels = frozenset((int(y), int(x)) for y, x in coords)
            components.append(Component(label=int(value), pixels=pixels))
    components.sort(
        key=lambda c: (min(y for y, _ in c.pixels), min(x for _, x in c.pixels))
    )
    return components


def compute_attributes(pixels: Iterable[Pixel], width: int, height: int) -> RegionAttributes:
    """Derive geometry and spatial-bin descriptors for one component.

    Centroids are taken at pixel centers (index + 0.5) so a component
    filling the whole image lands exactly on (0.5, 0.5).
    """
    points = list(pixels)
    if not points:
        raise ValueError("empty component")
    ys = [y for y, _ in points]
    xs = [x for _, x in points]
    count = len(points)
    width_px = max(xs) - min(xs) + 1
    height_px = max(ys) - min(ys) + 1
    centroid_x = (sum(xs) / count + 0.5) / width
    centroid_y = (sum(ys) / count + 0.5) / height
    area_ratio = count / (width * height)
    return RegionAttributes(
        area_ratio=area_ratio,
        width_px=width_px,
        height_px=height_px,
        aspect_ratio=width_px / height_px,
        elongation=max(width_px, height_px) / min(width_px, height_px),
        compactness=count / (width_px * height_px),
        centroid_x=centroid_x,
        centroid_y=centroid_y,
        horiz_bin=horizontal_bin(centroid_x),
        vert_bin=vertical_bin(centroid_y),
        size_bucket=size_bucket(area_ratio),
    )


def horizontal_bin(centroid_x: float) -> str:
    if centroid_x < BIN_LOW:
        return "left"
    if centroid_x > BIN_HIGH:
        return "right"
    return "center"


def vertical_bin(centroid_y: float) -> str:
    if centroid_y < BIN_LOW:
        return "upper"
    if centroid_y > BIN_HIGH:
        return "lower"
    return "middle"


def size_bucket(area_ratio: float) -> str:
    if area_ratio < TINY_BELOW:
        return "tiny"
    if area_ratio < SMALL_BELOW:
        return "small"
    if area_ratio < MEDIUM_BELOW:
        return "medium"
    return "large"


def tight_box(pixels: Iterable[Pixel]) -> PixelBox:
    """Smallest half-open pixel box containing every component pixel."""
    points = list(pixels)
    ys = [y for y, _ in points]
    xs = [x for _, x in points]
    return PixelBox(min(xs), min(ys), max(xs) + 1, max(ys) + 1)


def derive_boxes(
    mask: InstanceMask,
    image: ImageRef,
    connectivity: int = DEFAULT_CONNECTIVITY,
    min_component_pixels: int = DEFAULT_MIN_COMPONENT_PIXELS,
) -> CandidatePool:
    """Build the candidate pool for one image from its decoded mask."""
    if (mask.width, mask.height) != (image.width, image.height):
        raise ValueError(
            f"mask size {mask.width}x{mask.height} does not match "
            f"image size {image.width}x{image.height}"
        )
    components = connected_components(mask, connectivity)
    entries: list[PoolEntry] = []
    for component in components:
        if len(component.pixels) < min_component_pixels:
            continue
        box = tight_box(component.pixels)
        validate_pixel_box(box, image.width, image.height)
        entries.append(
            PoolEntry(
                box=normalize_box(box, image.width, image.height),
                attributes=compute_attributes(component.pixels, image.width, image.height),
            )
        )
    if not entries:
        raise ValueError("no usable targets")
    return CandidatePool(image=image, entries=tuple(entries), mask_mode=mask.mode)


_ATTRIBUTE_KEYS = (
    "area_ratio",
    "width_px",
    "height_px",
    "aspect_ratio",
    "elongation",
    "compactness",
    "centroid_x",
    "centroid_y",
    "horiz_bin",
    "vert_bin",
    "size_bucket",
)


def _attributes_record(attributes: RegionAttributes) -> dict[str, Any]:
    return {key: getattr(attributes, key) for key in _ATTRIBUTE_KEYS}


def _attributes_from_record(record: Mapping[str, Any]) -> RegionAttributes:
    missing = [key for key in _ATTRIBUTE_KEYS if key not in record]
    if missing:
        raise ValueError(f"missing attribute key: {missing[0]}")
    attributes = RegionAttributes(**{key: record[key] for key in _ATTRIBUTE_KEYS})
    if attributes.size_bucket not in SIZE_BUCKETS:
        raise ValueError(f"unknown size bucket: {attributes.size_bucket}")
    if attributes.horiz_bin not in HORIZ_BINS or attributes.vert_bin not in VERT_BINS:
        raise ValueError("unknown centroid bin")
    return attributes


def pool_record(pool: CandidatePool, split: str) -> dict[str, Any]:
    """JSON record for one pool; ``split`` is the pipeline grouping label."""
    return {
        "dataset": pool.image.dataset,
        "split": split,
        "image": pool.image.path,
        "width": pool.image.width,
        "height": pool.image.height,
        "modality": pool.image.modality,
        "mask_mode": pool.mask_mode,
        "entries": [
            {"box": entry.box.as_list(), "attributes": _attributes_record(entry.attributes)}
            for entry in pool.entries
        ],
    }


def serialize_pool(pool: CandidatePool, split: str) -> str:
    return json.dumps(pool_record(pool, split), separators=(",", ":"), ensure_ascii=False)


def parse_pool(line: str) -> tuple[CandidatePool, str]:
    """Inverse of serialize_pool; validates boxes and attribute enums."""
    return pool_from_record(json.loads(line))


def pool_from_record(record: Mapping[str, Any]) -> tuple[CandidatePool, str]:
    entries = []
    for raw in record["entries"]:
        box = NormBox(*raw["box"])
        validate_norm_box(box)
        entries.append(PoolEntry(box=box, attributes=_attributes_from_record(raw["attributes"])))
    if not entries:
        raise ValueError("empty candidate pool")
    if record["mask_mode"] not in MASK_MODES:
        raise ValueError(f"unknown mask mode: {record['mask_mode']}")
    image = ImageRef(
        dataset=record["dataset"],
        path=record["image"],
        width=record["width"],
        height=record["height"],
        modality=record["modality"],
    )
    pool = CandidatePool(image=image, entries=tuple(entries), mask_mode=record["mask_mode"])
    return pool, record.get("split", "train")
