"""Decision table for the rule stage.

Each case states a question, the target attribute bins, and the
expected verdict.  Expected values are hand-written, not derived from
the implementation, so the table doubles as a readable contract for
the size, location, and domain checks.
"""

from __future__ import annotations

import pytest

from refground.core import ImageRef, NormBox
from refground.masks import CandidatePool, PoolEntry, RegionAttributes
from refground.synthesis import SynthesizedQuery, load_profiles
from refground.verification import load_default_lexicons, stage2_rules

LEXICONS = load_default_lexicons()
PROFILES = load_profiles()


def run_case(
    question: str,
    targets: list[tuple[str, str, str]],
    modality: str = "CT",
):
    entries = []
    for i, (size, horiz, vert) in enumerate(targets):
        attrs = RegionAttributes(
            area_ratio=0.05,
            width_px=2,
            height_px=2,
            aspect_ratio=1.0,
            elongation=1.0,
            compactness=1.0,
            centroid_x=0.5,
            centroid_y=0.5,
            horiz_bin=horiz,
            vert_bin=vert,
            size_bucket=size,
        )
        entries.append(PoolEntry(box=NormBox(i * 100, 0, i * 100 + 50, 50), attributes=attrs))
    pool = CandidatePool(
        image=ImageRef("demo", "img.png", 64, 64, modality),
        entries=tuple(entries),
        mask_mode="binary",
    )
    query = SynthesizedQuery(
        question=question,
        target_indices=tuple(range(len(entries))),
        boxes=tuple(e.box for e in entries),
    )
    return stage2_rules(query, pool, PROFILES[modality], LEXICONS)


# (question, target size bucket, expected pass)
SIZE_CASES = [
    ("the tiny lesion", "tiny", True),
    ("the tiny lesion", "small", False),
    ("the tiny lesion", "medium", False),
    ("the tiny lesion", "large", False),
    ("a little lesion", "tiny", False),
    ("a little lesion", "small", True),
    ("a little lesion", "medium", False),
    ("a little lesion", "large", False),
    ("one moderate lesion", "tiny", False),
    ("one moderate lesion", "small", False),
    ("one moderate lesion", "medium", True),
    ("one moderate lesion", "large", False),
    ("the bulky lesion", "tiny", False),
    ("the bulky lesion", "small", False),
    ("the bulky lesion", "medium", False),
    ("the bulky lesion", "large", True),
]


@pytest.mark.parametrize("question, bucket, expected", SIZE_CASES)
def test_size_cases(question: str, bucket: str, expected: bool) -> None:
    outcome = run_case(question, targets=[(bucket, "center", "middle")])
    assert outcome.passed is expected
    if not expected:
        assert outcome.reason == "size_mismatch"


# (question, target horizontal bin, target vertical bin, expected pass)
# A lateral phrase only contradicts the opposite lateral bin; a vertical
# phrase only the opposite vertical bin; center/middle never contradict.
SPATIAL_CASES = [
    ("the lesion on the left", "left", "middle", True),
    ("the lesion on the left", "center", "middle", True),
    ("the lesion on the left", "right", "middle", False),
    ("the lesion on the right", "left", "middle", False),
    ("the lesion on the right", "center", "middle", True),
    ("the lesion on the right", "right", "middle", True),
    ("the upper lesion", "center", "upper", True),
    ("the upper lesion", "center", "middle", True),
    ("the upper lesion", "center", "lower", False),
    ("the lower lesion", "center", "upper", False),
    ("the lower lesion", "center", "middle", True),
    ("the lower lesion", "center", "lower", True),
    ("mass in the upper left zone", "left", "upper", True),
    ("mass in the upper left zone", "left", "middle", True),
    ("mass in the upper left zone", "left", "lower", False),
    ("mass in the upper left zone", "center", "upper", True),
    ("mass in the upper left zone", "center", "middle", True),
    ("mass in the upper left zone", "center", "lower", False),
    ("mass in the upper left zone", "right", "upper", False),
    ("mass in the upper left zone", "right", "middle", False),
    ("mass in the upper left zone", "right", "lower", False),
    ("mass in the lower right zone", "left", "upper", False),
    ("mass in the lower right zone", "left", "middle", False),
    ("mass in the lower right zone", "left", "lower", False),
    ("mass in the lower right zone", "center", "upper", False),
    ("mass in the lower right zone", "center", "middle", True),
    ("mass in the lower right zone", "center", "lower", True),
    ("mass in the lower right zone", "right", "upper", False),
    ("mass in the lower right zone", "right", "middle", True),
    ("mass in the lower right zone", "right", "lower", True),
    ("the central lesion", "left", "upper", True),
    ("the central lesion", "right", "lower", True),
    ("the middle lesion", "left", "upper", True),
    ("the middle lesion", "right", "lower", True),
]


@pytest.mark.parametrize("question, horiz, vert, expected", SPATIAL_CASES)
def test_spatial_cases(question: str, horiz: str, vert: str, expected: bool) -> None:
    outcome = run_case(question, targets=[("medium", horiz, vert)])
    assert outcome.passed is expected
    if not expected:
        assert outcome.reason == "location_mismatch"


# (question, modality, expected pass)
DENY_CASES = [
    ("the scan shows a streaked area", "Dermoscopy", False),
    ("scant pigment remains at the border", "Dermoscopy", True),
    ("a scanner artifact crosses the area", "Dermoscopy", True),
    ("the hypoechoic area", "CT", False),
    ("the hypoechoic area", "Ultrasound", True),
    ("gram-positive cocci in the field", "CT", False),
    ("gram-positive cocci in the field", "Bacteria", True),
    ("dense chromatin pattern", "Nuclei", True),
    ("dense chromatin pattern", "Ultrasound", False),
]


@pytest.mark.parametrize("question, modality, expected", DENY_CASES)
def test_deny_cases(question: str, modality: str, expected: bool) -> None:
    outcome = run_case(
        question, targets=[("medium", "center", "middle")], modality=modality
    )
    assert outcome.passed is expected
    if not expected:
        assert outcome.reason == "domain_leak"


# (question, list of target (size, horiz, vert), expected pass, expected reason)
MULTI_TARGET_CASES = [
    ("the small lesion among others", [("large", "center", "middle"), ("small", "left", "upper")], True, "ok"),
    ("the tiny spot", [("large", "center", "middle"), ("medium", "left", "upper")], False, "size_mismatch"),
    ("lesions toward the left", [("medium", "left", "upper"), ("medium", "right", "lower")], True, "ok"),
    ("lesions toward the left", [("medium", "right", "upper"), ("medium", "right", "lower")], False, "location_mismatch"),
    ("the small finding on the left", [("small", "right", "lower"), ("large", "left", "upper")], True, "ok"),
    ("two huge masses in the lower part", [("large", "left", "lower"), ("large", "right", "lower")], True, "ok"),
]


@pytest.mark.parametrize("question, targets, expected, reason", MULTI_TARGET_CASES)
def test_multi_target_cases(
    question: str, targets: list[tuple[str, str, str]], expected: bool, reason: str
) -> None:
    outcome = run_case(question, targets=targets)
    assert outcome.passed is expected
    assert outcome.reason == reason


# (question, target (size, horiz, vert), modality, expected reason)
# Checks run size, then location, then deny; the first hit is reported.
ORDERING_CASES = [
    ("the tiny hypoechoic lesion", ("large", "center", "middle"), "CT", "size_mismatch"),
    ("the left lesion is hypoechoic", ("large", "right", "middle"), "CT", "location_mismatch"),
    ("the lesion is hypoechoic", ("large", "right", "middle"), "CT", "domain_leak"),
    ("a smallish area without markers", ("large", "right", "middle"), "CT", "ok"),
    ("where is the lesion", ("tiny", "left", "upper"), "CT", "ok"),
]


@pytest.mark.parametrize("question, target, modality, reason", ORDERING_CASES)
def test_check_ordering(
    question: str, target: tuple[str, str, str], modality: str, reason: str
) -> None:
    outcome = run_case(question, targets=[target], modality=modality)
    assert outcome.reason == reason
    assert outcome.passed is (reason == "ok")


ALL_CASE_COUNT = (
    len(SIZE_CASES) + len(SPATIAL_CASES) + len(DENY_CASES)
    + len(MULTI_TARGET_CASES) + len(ORDERING_CASES)
)


def test_table_covers_at_least_sixty_cases() -> None:
    assert ALL_CASE_COUNT >= 60
