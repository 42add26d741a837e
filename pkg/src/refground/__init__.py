"""Tools for building, verifying, auditing, and evaluating referring-grounding data.

The pipeline turns segmentation masks into image/query/box triplets:
mask extraction derives candidate boxes with geometric attributes,
query synthesis drafts referring expressions against those candidates,
a three-stage verifier filters the drafts, human audit aggregates
reviewer votes, and the evaluation harness scores model predictions.
"""

from refground.core import (
    GRID,
    MODALITIES,
    ImageRef,
    NormBox,
    PixelBox,
    ReferringTriplet,
    StageEntry,
    denormalize_box,
    normalize_box,
    parse_triplet,
    serialize_triplet,
)

__all__ = [
    "GRID",
    "MODALITIES",
    "ImageRef",
    "NormBox",
    "PixelBox",
    "ReferringTriplet",
    "StageEntry",
    "denormalize_box",
    "normalize_box",
    "parse_triplet",
    "serialize_triplet",
]

__version__ = "0.1.0"
