"""Target selection, prompt construction, and generation parsing.

A draft query is produced in four steps: pick target indices from the
candidate pool with a seeded generator, build a modality-aware prompt
that embeds the indexed candidate list, send it to a generation
backend, then parse the response against a strict schema.  The schema
requires the generator to echo the target boxes coordinate-for-
coordinate, which is what lets the format stage catch hallucinated or
shifted coordinates.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from refground.core import ImageRef, NormBox
from refground.masks import CandidatePool
from refground.resources import load_deny_terms

RESPONSE_KEYS = ("question", "target_indices", "boxes")

DEFAULT_MAX_TARGETS = 3


class GenerationParseError(ValueError):
    """Raised when a backend response violates the response schema."""

    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class ModalityProfile:
    """Prompting guidance and keyword policy for one modality."""

    modality: str
    guidance: str
    allow_topics: tuple[str, ...]
    deny_terms: tuple[str, ...]
    example_phrasings: tuple[str, ...]


@dataclass(frozen=True)
class PromptBundle:
    system_prompt: str
    user_prompt: str
    image: ImageRef
    candidate_block: str


@dataclass(frozen=True)
class SynthesizedQuery:
    question: str
    target_indices: tuple[int, ...]
    boxes: tuple[NormBox, ...]


_GUIDANCE = {
    "CT": (
        "Use radiology wording suited to computed tomography: density terms "
        "such as hypodense or ground-glass, anatomic landmarks, lesion margins."
    ),
    "Ultrasound": (
        "Use sonography wording: echogenicity terms such as hypoechoic or "
        "anechoic, through-transmission, margin sharpness."
    ),
    "Dermoscopy": (
        "Use dermoscopy wording: pigmentation, symmetry, border regularity, "
        "surface features of skin lesions."
    ),
    "Nuclei": (
        "Use histopathology wording for cell nuclei: staining intensity, "
        "nuclear shape, clustering and overlap."
    ),
    "Bacteria": (
        "Use microbiology wording: colony or cell arrangement, shape classes "
        "such as rods or cocci, grouping patterns."
    ),
}

_ALLOW_TOPICS = {
    "CT": ("lesion", "nodule", "opacity", "mass", "lung", "attenuation"),
    "Ultrasound": ("nodule", "lesion", "mass", "thyroid", "echotexture", "margin"),
    "Dermoscopy": ("lesion", "mole", "pigmentation", "border", "symmetry", "surface"),
    "Nuclei": ("nucleus", "cell", "cluster", "staining", "shape", "arrangement"),
    "Bacteria": ("colony", "cell", "arrangement", "shape", "grouping", "density"),
}

_EXAMPLE_PHRASINGS = {
    "CT": (
        "locate the ill-defined hypodense lesion in the lower right part of the image",
        "identify the small nodular opacity near the upper margin",
    ),
    "Ultrasound": (
        "locate the hypoechoic nodule in the left portion of the image",
        "find the well-circumscribed cystic lesion in the middle region",
    ),
    "Dermoscopy": (
        "locate the pigmented lesion with an irregular border",
        "identify the asymmetric mole in the lower left area",
    ),
    "Nuclei": (
        "locate the enlarged hyperchromatic nucleus in the upper right field",
        "identify the crowded cluster of overlapping nuclei",
    ),
    "Bacteria": (
        "locate the rod-shaped cluster in the lower portion of the image",
        "identify the densely packed colony near the center",
    ),
}


def load_profiles(directory: Path | None = None) -> dict[str, ModalityProfile]:
    """Build one profile per modality from bundled (or overridden) lexicons."""
    profiles: dict[str, ModalityProfile] = {}
    for modality, guidance in _GUIDANCE.items():
        deny = load_deny_terms(modality, directory)
        allow = _ALLOW_TOPICS[modality]
        overlap = set(allow) & set(deny)
        if overlap:
            raise ValueError(f"allow/deny overlap for {modality}: {sorted(overlap)}")
        profiles[modality] = ModalityProfile(
            modality=modality,
            guidance=guidance,
            allow_topics=allow,
            deny_terms=deny,
            example_phrasings=_EXAMPLE_PHRASINGS[modality],
        )
    return profiles


def select_targets(
    pool: CandidatePool, seed: int, max_targets: int = DEFAULT_MAX_TARGETS
) -> tuple[int, ...]:
    """Deterministically pick 1..max_targets distinct pool indices.

    The count is drawn uniformly from the feasible range, then indices
    are sampled without replacement; the same (pool, seed) always
    yields the same selection.
    """
    if not pool.entries:
        raise ValueError("empty candidate pool")
    if max_targets < 1:
        raise ValueError("max_targets must be >= 1")
    rng = random.Random(seed)
    upper = min(max_targets, len(pool.entries))
    count = rng.randint(1, upper)
    return tuple(sorted(rng.sample(range(len(pool.entries)), count)))


def _candidate_line(index: int, box: NormBox, attributes: Any) -> str:
    return (
        f"[{index}] box=({box.x_min},{box.y_min},{box.x_max},{box.y_max}) "
        f"size={attributes.size_bucket} area={attributes.area_ratio * 100:.2f}% "
        f"position={attributes.horiz_bin}/{attributes.vert_bin} "
        f"aspect={attributes.aspect_ratio:.2f} fill={attributes.compactness:.2f}"
    )


def candidate_block(pool: CandidatePool) -> str:
    return "\n".join(
        _candidate_line(i, entry.box, entry.attributes)
        for i, entry in enumerate(pool.entries)
    )


def build_prompt(
    image: ImageRef,
    pool: CandidatePool,
    targets: tuple[int, ...],
    profile: ModalityProfile,
) -> PromptBundle:
    """Assemble the deterministic generation prompt for one draft."""
    for index in targets:
        if index < 0 or index >= len(pool.entries):
            raise ValueError(f"target index {index} out of range")
    block = candidate_block(pool)
    deny = ", ".join(profile.deny_terms)
    system_prompt = (
        "You write referring expressions that uniquely identify marked regions "
        "in medical images.\n"
        "Rules:\n"
        "1. Describe only properties visible in the image; never state a claim "
        "the image cannot justify.\n"
        "2. Incorporate location cues consistent with the stated position of "
        "each selected target.\n"
        f"3. Use terminology appropriate for {profile.modality} imaging. "
        f"{profile.guidance}\n"
        f"4. Never use any of these terms: {deny}.\n"
        "5. The query must single out the selected target(s) among all listed "
        "candidates.\n"
        "Respond with a single JSON object containing exactly the keys "
        '"question", "target_indices", and "boxes". "boxes" must echo the '
        "coordinates of the selected targets exactly as listed."
    )
    user_prompt = (
        f"Image: {image.path} ({image.width}x{image.height}, {profile.modality}, "
        f"dataset {image.dataset})\n"
        f"Candidates:\n{block}\n"
        f"Selected target indices: {list(targets)}\n"
        f"Topic keywords: {', '.join(profile.allow_topics)}\n"
        "Example phrasings:\n"
        + "\n".join(f"- {p}" for p in profile.example_phrasings)
        + "\nWrite one referring query for the selected target(s)."
    )
    return PromptBundle(
        system_prompt=system_prompt,
        user_prompt=user_prompt,
        image=image,
        candidate_block=block,
    )


def serialize_query(query: SynthesizedQuery) -> str:
    """Schema-shaped JSON for a query; what a well-behaved backend returns."""
    return json.dumps(
        {
            "question": query.question,
            "target_indices": list(query.target_indices),
            "boxes": [box.as_list() for box in query.boxes],
        },
        separators=(", ", ": "),
        ensure_ascii=False,
    )


@dataclass(frozen=True)
class DraftRecord:
    """One drafted sample: the pool, the chosen targets, the raw response."""

    id: str
    pool: CandidatePool
    split: str
    target_indices: tuple[int, ...]
    raw_response: str
    generator: str


def serialize_draft(draft: DraftRecord) -> str:
    from refground.masks import pool_record

    return json.dumps(
        {
            "id": draft.id,
            "generator": draft.generator,
            "target_indices": list(draft.target_indices),
            "raw": draft.raw_response,
            "pool": pool_record(draft.pool, draft.split),
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )


def parse_draft(line: str) -> DraftRecord:
    from refground.masks import pool_from_record

    record = json.loads(line)
    pool, split = pool_from_record(record["pool"])
    indices = record["target_indices"]
    if not isinstance(indices, list) or any(
        not isinstance(i, int) or isinstance(i, bool) for i in indices
    ):
        raise ValueError("target_indices must be integers")
    return DraftRecord(
        id=record["id"],
        pool=pool,
        split=split,
        target_indices=tuple(indices),
        raw_response=record["raw"],
        generator=record["generator"],
    )


def parse_generation(raw: str, pool: CandidatePool) -> SynthesizedQuery:
    """Strictly parse a backend response against the pool.

    Raises GenerationParseError with a stable code: syntax, missing_key,
    extra_key, bad_type, empty_question, invalid_index, box_mismatch.
    """
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise GenerationParseError("syntax", str(exc)) from exc
    if not isinstance(record, dict):
        raise GenerationParseError("syntax", "response is not a JSON object")
    for key in RESPONSE_KEYS:
        if key not in record:
            raise GenerationParseError("missing_key", key)
    for key in record:
        if key not in RESPONSE_KEYS:
            raise GenerationParseError("extra_key", key)

    question = record["question"]
    if not isinstance(question, str):
        raise GenerationParseError("bad_type", "question must be a string")
    if not question.strip():
        raise GenerationParseError("empty_question", "question is empty")

    indices = record["target_indices"]
    if not isinstance(indices, list) or any(
        not isinstance(i, int) or isinstance(i, bool) for i in indices
    ):
        raise GenerationParseError("bad_type", "target_indices must be integers")
    if not indices:
        raise GenerationParseError("invalid_index", "no target indices")
    if len(set(indices)) != len(indices):
        raise GenerationParseError("invalid_index", "duplicate target index")
    for index in indices:
        if index < 0 or index >= len(pool.entries):
            raise GenerationParseError("invalid_index", f"index {index} out of range")

    boxes = record["boxes"]
    if not isinstance(boxes, list) or len(boxes) != len(indices):
        raise GenerationParseError(
            "box_mismatch", "boxes must align one-to-one with target_indices"
        )
    parsed: list[NormBox] = []
    for index, raw_box in zip(indices, boxes):
        expected = pool.entries[index].box
        if raw_box != expected.as_list():
            raise GenerationParseError(
                "box_mismatch", f"box for index {index} differs from pool"
            )
        parsed.append(expected)
    return SynthesizedQuery(
        question=question,
        target_indices=tuple(indices),
        boxes=tuple(parsed),
    )
