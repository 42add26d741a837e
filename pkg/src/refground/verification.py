"""Three-stage draft verification and the cumulative pass-rate ledger.

Stage order is fixed: format (schema echo check), rules (lexical
consistency against mask-derived attributes), judge (vision-language
verdict on the overlaid image).  Stages short-circuit; a sample
rejected at stage k records no outcome for later stages.  Judge calls
that fail for infrastructure reasons quarantine the sample: it is
neither accepted nor counted anywhere in the ledger, so transient
outages cannot masquerade as data-quality rejection.

Ledger percentages are cumulative: survivors after each stage divided
by the initial (non-quarantined) count, which makes every row monotone
non-increasing.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import json

from refground.backend import Backend, BackendError, JudgeRequest
from refground.core import (
    NormBox,
    REASON_OK,
    ReferringTriplet,
    STAGE_FORMAT,
    STAGE_JUDGE,
    STAGE_ORDER,
    STAGE_RULES,
    StageEntry,
    percent_text,
)
from refground.masks import (
    CandidatePool,
    HORIZ_BINS,
    SIZE_BUCKETS,
    VERT_BINS,
)
from refground.overlay import render_overlay
from refground.resources import (
    SIZE_TERMS_FILE,
    SPATIAL_PHRASES_FILE,
    load_all_deny,
    load_all_morphology,
    load_term_mapping,
)
from refground.synthesis import (
    DraftRecord,
    GenerationParseError,
    ModalityProfile,
    SynthesizedQuery,
    parse_generation,
)
from refground.textmatch import compile_terms, find_terms, first_term

# Failure reason codes, grouped by stage.
REASON_SIZE_MISMATCH = "size_mismatch"
REASON_LOCATION_MISMATCH = "location_mismatch"
REASON_DOMAIN_LEAK = "domain_leak"
REASON_NOT_GROUNDED = "not_grounded"
REASON_AMBIGUOUS = "ambiguous"
REASON_JUDGE_MALFORMED = "judge_malformed"
REASON_JUDGE_UNAVAILABLE = "judge_unavailable"

_JUDGE_KEYS = {"grounded", "unambiguous", "restatement", "reason"}

_LATERAL = ("left", "right")
_VERTICAL = ("upper", "lower")


@dataclass(frozen=True)
class StageOutcome:
    stage: str
    passed: bool
    reason: str
    detail: str = ""

    def __post_init__(self) -> None:
        if self.passed and self.reason != REASON_OK:
            raise ValueError("passed outcome must carry reason 'ok'")


@dataclass(frozen=True)
class VerificationOutcome:
    """Per-sample verdict: the recorded stages and the final decision."""

    triplet_id: str
    stages: tuple[StageOutcome, ...]
    accepted: bool

    @property
    def quarantined(self) -> bool:
        return any(s.reason == REASON_JUDGE_UNAVAILABLE for s in self.stages)


class LexiconSet:
    """Compiled lexicons for the rule stage.

    Size adjectives map to area buckets, spatial phrases to centroid-bin
    constraints (``None`` leaves an axis unconstrained), and each
    modality carries a deny list.  Deny lists are validated to be
    disjoint from the modality's own morphology vocabulary.
    """

    def __init__(
        self,
        size_map: Mapping[str, str],
        spatial_map: Mapping[str, tuple[str | None, str | None]],
        deny: Mapping[str, tuple[str, ...]],
        morphology: Mapping[str, tuple[str, ...]],
    ) -> None:
        for term, bucket in size_map.items():
            if bucket not in SIZE_BUCKETS:
                raise ValueError(f"size term {term!r} maps to unknown bucket {bucket!r}")
        for phrase, (horiz, vert) in spatial_map.items():
            if horiz is not None and horiz not in HORIZ_BINS:
                raise ValueError(f"phrase {phrase!r} has unknown horizontal bin")
            if vert is not None and vert not in VERT_BINS:
                raise ValueError(f"phrase {phrase!r} has unknown vertical bin")
        for modality, terms in deny.items():
            own = set(morphology.get(modality, ()))
            overlap = own & set(terms)
            if overlap:
                raise ValueError(
                    f"deny list for {modality} intersects its own terms: {sorted(overlap)}"
                )
        self.size_map = dict(size_map)
        self.spatial_map = dict(spatial_map)
        self.deny = dict(deny)
        self.morphology = dict(morphology)
        self.size_pattern = compile_terms(size_map)
        self.spatial_pattern = compile_terms(spatial_map)
        self.deny_patterns: dict[str, re.Pattern[str] | None] = {
            modality: compile_terms(terms) for modality, terms in deny.items()
        }


def _parse_spatial_value(value: str) -> tuple[str | None, str | None]:
    horiz, sep, vert = value.partition(",")
    if not sep:
        raise ValueError(f"malformed spatial constraint {value!r}")
    h = None if horiz.strip() == "any" else horiz.strip()
    v = None if vert.strip() == "any" else vert.strip()
    return h, v


def load_default_lexicons(directory: Path | None = None) -> LexiconSet:
    spatial_raw = load_term_mapping(SPATIAL_PHRASES_FILE, directory)
    return LexiconSet(
        size_map=load_term_mapping(SIZE_TERMS_FILE, directory),
        spatial_map={k: _parse_spatial_value(v) for k, v in spatial_raw.items()},
        deny=load_all_deny(directory),
        morphology=load_all_morphology(directory),
    )


def stage1_format(raw: str, pool: CandidatePool) -> tuple[StageOutcome, SynthesizedQuery | None]:
    """Schema check; reason codes mirror the parse error codes."""
    try:
        query = parse_generation(raw, pool)
    except GenerationParseError as exc:
        return StageOutcome(STAGE_FORMAT, False, exc.code, exc.detail), None
    return StageOutcome(STAGE_FORMAT, True, REASON_OK), query


def _contradicts(
    constraint: tuple[str | None, str | None], horiz_bin: str, vert_bin: str
) -> bool:
    horiz, vert = constraint
    # A center/middle value on either side never contradicts.
    if horiz in _LATERAL and horiz_bin in _LATERAL and horiz != horiz_bin:
        return True
    if vert in _VERTICAL and vert_bin in _VERTICAL and vert != vert_bin:
        return True
    return False


def stage2_rules(
    query: SynthesizedQuery,
    pool: CandidatePool,
    profile: ModalityProfile,
    lexicons: LexiconSet,
) -> StageOutcome:
    """Lexical consistency between the question and target attributes.

    For multi-target queries each matched descriptor must be satisfiable
    by at least one selected target.
    """
    targets = [pool.entries[i].attributes for i in query.target_indices]
    question = query.question

    for adjective in dict.fromkeys(find_terms(question, lexicons.size_pattern)):
        bucket = lexicons.size_map[adjective]
        if not any(t.size_bucket == bucket for t in targets):
            actual = sorted({t.size_bucket for t in targets})
            return StageOutcome(
                STAGE_RULES,
                False,
                REASON_SIZE_MISMATCH,
                f"{adjective!r} implies {bucket} but targets are {actual}",
            )

    for phrase in dict.fromkeys(find_terms(question, lexicons.spatial_pattern)):
        constraint = lexicons.spatial_map[phrase]
        if all(_contradicts(constraint, t.horiz_bin, t.vert_bin) for t in targets):
            actual = sorted({(t.horiz_bin, t.vert_bin) for t in targets})
            return StageOutcome(
                STAGE_RULES,
                False,
                REASON_LOCATION_MISMATCH,
                f"{phrase!r} contradicts target bins {actual}",
            )

    denied = first_term(question, lexicons.deny_patterns.get(profile.modality))
    if denied is not None:
        return StageOutcome(
            STAGE_RULES,
            False,
            REASON_DOMAIN_LEAK,
            f"{denied!r} is denied for {profile.modality}",
        )
    return StageOutcome(STAGE_RULES, True, REASON_OK)


def build_judge_prompt(query: str, boxes: Sequence[NormBox]) -> tuple[str, str]:
    coords = [box.as_list() for box in boxes]
    system_prompt = (
        "You review referring expressions for medical images.  The attached "
        "image has the answer region(s) outlined in red as a localization "
        "anchor; the same coordinates are listed below on a 1000x1000 grid.\n"
        "Judge two properties:\n"
        "- grounded: every claim in the query is visibly true of the outlined "
        "region(s).\n"
        "- unambiguous: the query singles out the outlined region(s); no other "
        "region in the image fits equally well.\n"
        "First restate the visible attributes of the outlined region(s) in "
        "your own words, then decide.\n"
        "Respond with a single JSON object with exactly the keys "
        '"grounded" (boolean), "unambiguous" (boolean), "restatement" '
        '(string), and "reason" (string).'
    )
    user_prompt = f"Query: {query}\nAnswer boxes: {coords}"
    return system_prompt, user_prompt


def _parse_judge_reply(raw: str) -> dict[str, object] | None:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError:
        return None
    if not isinstance(record, dict) or set(record) != _JUDGE_KEYS:
        return None
    if not isinstance(record["grounded"], bool) or not isinstance(
        record["unambiguous"], bool
    ):
        return None
    if not isinstance(record["restatement"], str) or not isinstance(
        record["reason"], str
    ):
        return None
    return record


def stage3_judge(
    backend: Backend,
    sample_id: str,
    image_bytes: bytes,
    query: str,
    boxes: tuple[NormBox, ...],
) -> StageOutcome:
    """Judge verdict over the overlaid image; one re-ask on a malformed reply."""
    overlay = render_overlay(image_bytes, boxes)
    system_prompt, user_prompt = build_judge_prompt(query, boxes)
    request = JudgeRequest(
        sample_id=sample_id,
        query=query,
        boxes=boxes,
        system_prompt=system_prompt,
        user_prompt=user_prompt,
        image_bytes=overlay,
    )
    for _ in range(2):
        try:
            raw = backend.judge(request)
        except BackendError as exc:
            return StageOutcome(STAGE_JUDGE, False, REASON_JUDGE_UNAVAILABLE, str(exc))
        verdict = _parse_judge_reply(raw)
        if verdict is None:
            continue
        if verdict["grounded"] and verdict["unambiguous"]:
            return StageOutcome(STAGE_JUDGE, True, REASON_OK)
        reason = REASON_NOT_GROUNDED if not verdict["grounded"] else REASON_AMBIGUOUS
        return StageOutcome(STAGE_JUDGE, False, reason, str(verdict["reason"]))
    return StageOutcome(
        STAGE_JUDGE, False, REASON_JUDGE_MALFORMED, "two malformed judge replies"
    )


@dataclass
class StageLedger:
    """Cumulative survivor counts for one (dataset, split) group."""

    initial: int = 0
    survivors: list[int] = field(default_factory=lambda: [0, 0, 0])


@dataclass(frozen=True)
class LedgerRow:
    dataset: str
    split: str
    initial: int
    survivors: tuple[int, int, int]
    percents: tuple[str, str, str]
    remaining: int


@dataclass
class VerificationResult:
    accepted: list[ReferringTriplet]
    outcomes: list[VerificationOutcome]
    ledgers: dict[tuple[str, str], StageLedger]


def _triplet_from_draft(
    draft: DraftRecord, query: SynthesizedQuery, stages: Sequence[StageOutcome]
) -> ReferringTriplet:
    return ReferringTriplet(
        id=draft.id,
        image=draft.pool.image,
        query=query.question,
        answer_boxes=query.boxes,
        candidate_count=len(draft.pool.entries),
        generator=draft.generator,
        stage_log=tuple(StageEntry(s.stage, s.passed, s.reason) for s in stages),
    )


def validate_stage_prefix(enabled_stages: Sequence[str]) -> tuple[str, ...]:
    """Stages can only be disabled from the end; format always runs."""
    prefix = tuple(enabled_stages)
    if not prefix or prefix != STAGE_ORDER[: len(prefix)]:
        raise ValueError(
            f"enabled stages must be a non-empty prefix of {STAGE_ORDER}, got {prefix}"
        )
    return prefix


def verify_draft(
    draft: DraftRecord,
    backend: Backend,
    lexicons: LexiconSet,
    profiles: Mapping[str, ModalityProfile],
    image_loader: Callable[[DraftRecord], bytes],
    enabled_stages: Sequence[str] = STAGE_ORDER,
) -> tuple[VerificationOutcome, ReferringTriplet | None]:
    """Run the enabled stage prefix over one draft, short-circuiting on failure."""
    enabled_stages = validate_stage_prefix(enabled_stages)
    stages: list[StageOutcome] = []

    outcome, query = stage1_format(draft.raw_response, draft.pool)
    stages.append(outcome)
    if not outcome.passed:
        return VerificationOutcome(draft.id, tuple(stages), False), None

    if STAGE_RULES in enabled_stages:
        profile = profiles[draft.pool.image.modality]
        outcome = stage2_rules(query, draft.pool, profile, lexicons)
        stages.append(outcome)
        if not outcome.passed:
            return VerificationOutcome(draft.id, tuple(stages), False), None

    if STAGE_JUDGE in enabled_stages:
        outcome = stage3_judge(
            backend,
            draft.id,
            image_loader(draft),
            query.question,
            query.boxes,
        )
        stages.append(outcome)
        if not outcome.passed:
            return VerificationOutcome(draft.id, tuple(stages), False), None

    triplet = _triplet_from_draft(draft, query, stages)
    return VerificationOutcome(draft.id, tuple(stages), True), triplet


def run_verification(
    drafts: Iterable[DraftRecord],
    backend: Backend,
    lexicons: LexiconSet,
    profiles: Mapping[str, ModalityProfile],
    image_loader: Callable[[DraftRecord], bytes],
    enabled_stages: Sequence[str] = STAGE_ORDER,
    concurrency: int = 1,
) -> VerificationResult:
    """Verify drafts in input order and fold the pass-rate ledger.

    Quarantined samples (judge infrastructure failure) are excluded from
    the ledger entirely: they count neither as initial samples nor as
    rejections.  A disabled stage passes samples through unchanged.
    """
    enabled_stages = validate_stage_prefix(enabled_stages)
    draft_list = list(drafts)

    def work(draft: DraftRecord) -> tuple[VerificationOutcome, ReferringTriplet | None]:
        return verify_draft(
            draft, backend, lexicons, profiles, image_loader, enabled_stages
        )

    if concurrency > 1 and draft_list:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(work, draft_list))
    else:
        results = [work(d) for d in draft_list]

    accepted: list[ReferringTriplet] = []
    outcomes: list[VerificationOutcome] = []
    ledgers: dict[tuple[str, str], StageLedger] = {}
    for draft, (outcome, triplet) in zip(draft_list, results):
        outcomes.append(outcome)
        if outcome.quarantined:
            continue
        key = (draft.pool.image.dataset, draft.split)
        ledger = ledgers.setdefault(key, StageLedger())
        ledger.initial += 1
        # Enabled stages are a prefix and short-circuit, so a draft's
        # recorded passes are exactly the stages it survived; disabled
        # tail stages pass survivors through unchanged.
        survived = sum(1 for s in outcome.stages if s.passed)
        if survived == len(enabled_stages):
            survived = len(STAGE_ORDER)
        for position in range(survived):
            ledger.survivors[position] += 1
        if triplet is not None:
            accepted.append(triplet)
    return VerificationResult(accepted=accepted, outcomes=outcomes, ledgers=ledgers)


def pass_rate_report(
    ledgers: Mapping[tuple[str, str], StageLedger]
) -> list[LedgerRow]:
    """Render cumulative retention rows per (dataset, split) plus split totals.

    Percentages are survivors-after-stage over the initial count, one
    decimal, rounded half up; ``remaining`` is the last-stage survivor
    count.  Raises if any ledger is non-monotone (impossible under the
    cumulative definition; guards against hand-built inputs).
    """
    for key, ledger in ledgers.items():
        counts = [ledger.initial, *ledger.survivors]
        for before, after in zip(counts, counts[1:]):
            if after > before:
                raise ValueError(f"non-monotone ledger for {key}: {counts}")

    rows: list[LedgerRow] = []
    splits = sorted({split for _, split in ledgers})
    for split in splits:
        group = {ds: lg for (ds, sp), lg in ledgers.items() if sp == split}
        totals = StageLedger()
        for dataset in sorted(group):
            ledger = group[dataset]
            totals.initial += ledger.initial
            for i in range(3):
                totals.survivors[i] += ledger.survivors[i]
            rows.append(_ledger_row(dataset, split, ledger))
        rows.append(_ledger_row("total", split, totals))
    return rows


def _ledger_row(dataset: str, split: str, ledger: StageLedger) -> LedgerRow:
    percents = tuple(
        percent_text(survivor, ledger.initial, 1) for survivor in ledger.survivors
    )
    return LedgerRow(
        dataset=dataset,
        split=split,
        initial=ledger.initial,
        survivors=tuple(ledger.survivors),
        percents=percents,  # type: ignore[arg-type]
        remaining=ledger.survivors[-1],
    )


LEDGER_CSV_HEADER = "dataset,split,initial,format_pct,rules_pct,judge_pct,remaining"


def render_ledger_csv(rows: Sequence[LedgerRow]) -> str:
    lines = [LEDGER_CSV_HEADER]
    for row in rows:
        lines.append(
            f"{row.dataset},{row.split},{row.initial},"
            f"{row.percents[0]},{row.percents[1]},{row.percents[2]},{row.remaining}"
        )
    return "\n".join(lines) + "\n"


def ledger_rows_json(rows: Sequence[LedgerRow]) -> list[dict[str, object]]:
    return [
        {
            "dataset": row.dataset,
            "split": row.split,
            "initial": row.initial,
            "survivors": list(row.survivors),
            "percents": list(row.percents),
            "remaining": row.remaining,
        }
        for row in rows
    ]
