"""Grounding evaluation: prediction parsing, IoU scoring, reports.

Predictions arrive as free-form model text; every bracketed 4-integer
group is read as a box on the 1000-grid, clamped and order-repaired.
Scoring matches predicted boxes to answer boxes injectively and means
the per-target IoU, so unmatched targets drag the score down while
surplus predictions are ignored.

Semantic Sensitivity scores image-level pairs of queries with
different targets: a pair counts only when both queries are localized
above the threshold, which is what makes the metric sensitive to
query wording rather than single-box luck.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import combinations, permutations
from typing import Iterable, Mapping, Sequence

from refground.core import GRID, NormBox, ReferringTriplet

_BOX_RE = re.compile(
    r"\[\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*,\s*(-?\d+)\s*\]"
)

# Exhaustive assignment search is exact up to this many targets; larger
# instances fall back to a library solver with the same contract.
_EXHAUSTIVE_LIMIT = 6

MATCHING_POLICIES = ("optimal", "greedy")


def _clamp(value: int) -> int:
    return min(max(value, 0), GRID)


def parse_prediction(text: str) -> tuple[NormBox, ...]:
    """Extract every plausible box; clamp, swap reversed edges, drop empty."""
    boxes: list[NormBox] = []
    for match in _BOX_RE.finditer(text):
        a, b, c, d = (_clamp(int(g)) for g in match.groups())
        x_min, x_max = sorted((a, c))
        y_min, y_max = sorted((b, d))
        if x_min == x_max or y_min == y_max:
            continue
        boxes.append(NormBox(x_min, y_min, x_max, y_max))
    return tuple(boxes)


@dataclass(frozen=True)
class PredictionRecord:
    triplet_id: str
    raw_text: str
    boxes: tuple[NormBox, ...]

    @property
    def parsed(self) -> bool:
        return bool(self.boxes)


def prediction_record(triplet_id: str, raw_text: str) -> PredictionRecord:
    return PredictionRecord(
        triplet_id=triplet_id, raw_text=raw_text, boxes=parse_prediction(raw_text)
    )


@dataclass(frozen=True)
class EvalConfig:
    tau: float = 0.5
    policy: str = "optimal"

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie strictly between 0 and 1")
        if self.policy not in MATCHING_POLICIES:
            raise ValueError(f"policy must be one of {MATCHING_POLICIES}")


def iou(a: NormBox, b: NormBox) -> float:
    inter_w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    inter_h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min)
    area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min)
    return inter / (area_a + area_b - inter)


@dataclass(frozen=True)
class EvalRecord:
    triplet_id: str
    per_target_iou: tuple[float, ...]
    mean_iou: float
    assignment: tuple[tuple[int, int], ...]


def _optimal_assignment(matrix: list[list[float]]) -> list[tuple[int, int]]:
    n_preds = len(matrix)
    n_targets = len(matrix[0]) if matrix else 0
    if n_preds == 0 or n_targets == 0:
        return []
    if min(n_preds, n_targets) > _EXHAUSTIVE_LIMIT:
        return _library_assignment(matrix)
    best_pairs: list[tuple[int, int]] = []
    best_total = -1.0
    if n_preds <= n_targets:
        for targets in permutations(range(n_targets), n_preds):
            total = sum(matrix[p][t] for p, t in enumerate(targets))
            if total > best_total:
                best_total = total
                best_pairs = list(enumerate(targets))
    else:
        for preds in permutations(range(n_preds), n_targets):
            total = sum(matrix[p][t] for t, p in enumerate(preds))
            if total > best_total:
                best_total = total
                best_pairs = [(p, t) for t, p in enumerate(preds)]
    return best_pairs


def _library_assignment(matrix: list[list[float]]) -> list[tuple[int, int]]:
    import numpy as np
    from scipy.optimize import linear_sum_assignment

    cost = -np.asarray(matrix)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _greedy_assignment(matrix: list[list[float]]) -> list[tuple[int, int]]:
    pairs = sorted(
        (
            (-matrix[p][t], p, t)
            for p in range(len(matrix))
            for t in range(len(matrix[0]) if matrix else 0)
        ),
    )
    used_preds: set[int] = set()
    used_targets: set[int] = set()
    chosen: list[tuple[int, int]] = []
    for neg_score, p, t in pairs:
        if p in used_preds or t in used_targets:
            continue
        used_preds.add(p)
        used_targets.add(t)
        chosen.append((p, t))
    return chosen


def match_and_score(
    triplet_id: str,
    preds: Sequence[NormBox],
    targets: Sequence[NormBox],
    config: EvalConfig,
) -> EvalRecord:
    """Injective prediction-to-target matching; mean IoU over targets."""
    if not targets:
        raise ValueError("targets must be non-empty")
    matrix = [[iou(p, t) for t in targets] for p in preds]
    if config.policy == "optimal":
        pairs = _optimal_assignment(matrix)
    else:
        pairs = _greedy_assignment(matrix)
    per_target = [0.0] * len(targets)
    kept: list[tuple[int, int]] = []
    for p, t in pairs:
        score = matrix[p][t]
        if score > 0.0:
            per_target[t] = score
            kept.append((p, t))
    kept.sort(key=lambda pair: pair[1])
    mean = math.fsum(per_target) / len(targets)
    return EvalRecord(
        triplet_id=triplet_id,
        per_target_iou=tuple(per_target),
        mean_iou=mean,
        assignment=tuple(kept),
    )


def score_records(
    predictions: Iterable[PredictionRecord],
    triplets: Iterable[ReferringTriplet],
    config: EvalConfig,
) -> dict[str, EvalRecord]:
    """One record per triplet; triplets without a prediction score zero."""
    triplet_map = {t.id: t for t in triplets}
    pred_map: dict[str, PredictionRecord] = {}
    for record in predictions:
        if record.triplet_id not in triplet_map:
            raise ValueError(f"prediction for unknown triplet id {record.triplet_id!r}")
        pred_map[record.triplet_id] = record
    scored: dict[str, EvalRecord] = {}
    for tid, triplet in triplet_map.items():
        record = pred_map.get(tid)
        preds = record.boxes if record else ()
        scored[tid] = match_and_score(tid, preds, triplet.answer_boxes, config)
    return scored


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    samples: int
    mean_iou_x100: str
    acc_at_half: str


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]
    warnings: tuple[str, ...]


def _score_text(values: Sequence[float]) -> str:
    if not values:
        return "0.0"
    return f"{math.fsum(values) / len(values) * 100:.1f}"


def evaluate_split(
    predictions: Iterable[PredictionRecord],
    triplets: Iterable[ReferringTriplet],
    config: EvalConfig,
) -> EvalReport:
    """Per-dataset mean IoU x100 and Acc@0.5, plus a total row."""
    triplet_list = list(triplets)
    prediction_list = list(predictions)
    scored = score_records(prediction_list, triplet_list, config)

    by_dataset: dict[str, list[float]] = {}
    for triplet in triplet_list:
        by_dataset.setdefault(triplet.image.dataset, []).append(
            scored[triplet.id].mean_iou
        )
    rows: list[EvalRow] = []
    all_scores: list[float] = []
    for dataset in sorted(by_dataset):
        scores = by_dataset[dataset]
        all_scores.extend(scores)
        rows.append(
            EvalRow(
                dataset=dataset,
                samples=len(scores),
                mean_iou_x100=_score_text(scores),
                acc_at_half=_score_text([1.0 if s >= 0.5 else 0.0 for s in scores]),
            )
        )
    if by_dataset:
        rows.append(
            EvalRow(
                dataset="total",
                samples=len(all_scores),
                mean_iou_x100=_score_text(all_scores),
                acc_at_half=_score_text(
                    [1.0 if s >= 0.5 else 0.0 for s in all_scores]
                ),
            )
        )
    warnings: list[str] = []
    if not prediction_list and triplet_list:
        warnings.append("no predictions supplied; every sample scored zero")
    return EvalReport(rows=tuple(rows), warnings=tuple(warnings))


EVAL_CSV_HEADER = "dataset,samples,mean_iou_x100,acc_at_0.5"


def render_eval_csv(report: EvalReport) -> str:
    lines = [EVAL_CSV_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.dataset},{row.samples},{row.mean_iou_x100},{row.acc_at_half}"
        )
    for warning in report.warnings:
        lines.append(f"# warning: {warning}")
    return "\n".join(lines) + "\n"


SSPair = tuple[ReferringTriplet, ReferringTriplet]


def build_pair_set(triplets: Iterable[ReferringTriplet]) -> list[SSPair]:
    """All same-image query pairs whose answer-box sets are disjoint."""
    ordered = sorted(
        triplets, key=lambda t: (t.image.dataset, t.image.path, t.id)
    )
    by_image: dict[tuple[str, str], list[ReferringTriplet]] = {}
    for triplet in ordered:
        key = (triplet.image.dataset, triplet.image.path)
        by_image.setdefault(key, []).append(triplet)
    pairs: list[SSPair] = []
    for key in sorted(by_image):
        group = by_image[key]
        for a, b in combinations(group, 2):
            if set(a.answer_boxes) & set(b.answer_boxes):
                continue
            pairs.append((a, b))
    return pairs


def semantic_sensitivity(
    pairs: Sequence[SSPair],
    scored: Mapping[str, EvalRecord],
    config: EvalConfig,
) -> float:
    """Share of pairs with both queries above tau, as a percentage."""
    if not pairs:
        return 0.0
    hits = 0
    for a, b in pairs:
        if a.image != b.image:
            raise ValueError(f"pair {a.id}/{b.id} does not share an image")
        if set(a.answer_boxes) & set(b.answer_boxes):
            raise ValueError(f"pair {a.id}/{b.id} references the same target")
        score_a = scored[a.id].mean_iou
        score_b = scored[b.id].mean_iou
        if score_a > config.tau and score_b > config.tau:
            hits += 1
    return hits / len(pairs) * 100.0


SS_CSV_HEADER = "tau,pairs,ss"


def render_ss_csv(
    pairs: Sequence[SSPair],
    scored: Mapping[str, EvalRecord],
    taus: Sequence[float],
    policy: str = "optimal",
) -> str:
    lines = [SS_CSV_HEADER]
    for tau in taus:
        config = EvalConfig(tau=tau, policy=policy)
        value = semantic_sensitivity(pairs, scored, config)
        lines.append(f"{tau},{len(pairs)},{value:.1f}")
    return "\n".join(lines) + "\n"
