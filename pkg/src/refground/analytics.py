"""Semantic richness metrics over verified triplet streams.

Three per-query metrics (entity density, morphology hits, spatial
complexity) plus split-level aggregation into per-dataset rows.  All
metrics share the single whitespace tokenizer, so word counts never
drift between the average-words statistic and the density denominator.

Entity matching uses a bundled clinical gazetteer rather than a
concept linker; absolute densities are proxies and only relative
orderings between splits are meaningful.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from refground.core import MODALITIES, ReferringTriplet, ratio_text
from refground.resources import (
    ENTITIES_FILE,
    SPATIAL_RELATIONS_FILE,
    load_all_morphology,
    load_term_list,
)
from refground.textmatch import compile_terms, find_terms, unique_terms, word_count


class Gazetteer:
    """Compiled term lists used by the richness metrics."""

    def __init__(
        self,
        entities: Sequence[str],
        morphology: Mapping[str, Sequence[str]],
        spatial: Sequence[str],
    ) -> None:
        for name, terms in (("entities", entities), ("spatial", spatial)):
            _check_terms(name, terms)
        for modality, terms in morphology.items():
            if modality not in MODALITIES:
                raise ValueError(f"unknown modality {modality!r} in gazetteer")
            _check_terms(f"morphology[{modality}]", terms)
        self.entities = tuple(entities)
        self.morphology = {m: tuple(t) for m, t in morphology.items()}
        self.spatial = tuple(spatial)
        self.entity_pattern = compile_terms(entities)
        self.spatial_pattern = compile_terms(spatial)
        self.morphology_patterns: dict[str, re.Pattern[str] | None] = {
            modality: compile_terms(terms) for modality, terms in morphology.items()
        }


def _check_terms(name: str, terms: Sequence[str]) -> None:
    seen: set[str] = set()
    for term in terms:
        if term != term.lower():
            raise ValueError(f"{name} term {term!r} is not lower-cased")
        if term in seen:
            raise ValueError(f"{name} term {term!r} is duplicated")
        seen.add(term)


def load_default_gazetteer(directory: Path | None = None) -> Gazetteer:
    return Gazetteer(
        entities=load_term_list(ENTITIES_FILE, directory),
        morphology=load_all_morphology(directory),
        spatial=load_term_list(SPATIAL_RELATIONS_FILE, directory),
    )


def entity_density(query: str, gazetteer: Gazetteer) -> float:
    """Unique entity matches divided by the query word count."""
    words = word_count(query)
    if words == 0:
        raise ValueError("empty query")
    hits = unique_terms(query, gazetteer.entity_pattern)
    return len(hits) / words


def morphology_hits(query: str, modality: str, gazetteer: Gazetteer) -> tuple[str, ...]:
    pattern = gazetteer.morphology_patterns.get(modality)
    return unique_terms(query, pattern)


@dataclass(frozen=True)
class MorphologyStats:
    coverage: float
    mean_distinct_hits: float
    empty_input: bool


def morphology_stats(
    queries: Sequence[str], modality: str, gazetteer: Gazetteer
) -> MorphologyStats:
    """Coverage (share of queries with a hit) and mean distinct hits."""
    if not queries:
        return MorphologyStats(coverage=0.0, mean_distinct_hits=0.0, empty_input=True)
    hit_counts = [len(morphology_hits(q, modality, gazetteer)) for q in queries]
    covered = sum(1 for n in hit_counts if n > 0)
    return MorphologyStats(
        coverage=covered / len(queries),
        mean_distinct_hits=sum(hit_counts) / len(queries),
        empty_input=False,
    )


def spatial_complexity(query: str, gazetteer: Gazetteer) -> int:
    """Total, not unique, spatial-term occurrences in the query."""
    return len(find_terms(query, gazetteer.spatial_pattern))


@dataclass(frozen=True)
class DatasetRow:
    dataset: str
    split: str
    queries: int
    images: int
    tokens: int
    avg_words: str
    entity_density: float
    morphology_coverage: float
    morphology_mean_hits: float
    spatial_complexity: float


@dataclass(frozen=True)
class SplitStats:
    split: str
    queries: int
    images: int
    tokens: int
    avg_words: str
    modality_ratios: dict[str, float]
    rows: tuple[DatasetRow, ...]


def _avg_words_text(tokens: int, queries: int) -> str:
    if queries == 0:
        return "0.0"
    return ratio_text(Fraction(tokens, queries), places=1)


def split_statistics(
    triplets: Iterable[ReferringTriplet], split: str, gazetteer: Gazetteer
) -> SplitStats:
    """Aggregate per-dataset metric rows for one split.

    Rows are keyed and sorted by dataset; every metric is a mean over
    queries, so the result is invariant to triplet order.
    """
    triplet_list = list(triplets)
    by_dataset: dict[str, list[ReferringTriplet]] = {}
    for triplet in triplet_list:
        by_dataset.setdefault(triplet.image.dataset, []).append(triplet)

    rows: list[DatasetRow] = []
    for dataset in sorted(by_dataset):
        group = by_dataset[dataset]
        tokens = sum(word_count(t.query) for t in group)
        images = len({t.image.path for t in group})
        densities = [entity_density(t.query, gazetteer) for t in group]
        hit_counts = [
            len(morphology_hits(t.query, t.image.modality, gazetteer)) for t in group
        ]
        spatial_counts = [spatial_complexity(t.query, gazetteer) for t in group]
        rows.append(
            DatasetRow(
                dataset=dataset,
                split=split,
                queries=len(group),
                images=images,
                tokens=tokens,
                avg_words=_avg_words_text(tokens, len(group)),
                # fsum is exactly rounded, keeping means order-invariant.
                entity_density=math.fsum(densities) / len(group),
                morphology_coverage=sum(1 for n in hit_counts if n > 0) / len(group),
                morphology_mean_hits=sum(hit_counts) / len(group),
                spatial_complexity=sum(spatial_counts) / len(group),
            )
        )

    total_tokens = sum(row.tokens for row in rows)
    total_queries = len(triplet_list)
    modality_counts: dict[str, int] = {}
    for triplet in triplet_list:
        modality = triplet.image.modality
        modality_counts[modality] = modality_counts.get(modality, 0) + 1
    ratios = {
        modality: count / total_queries
        for modality, count in sorted(modality_counts.items())
    }
    return SplitStats(
        split=split,
        queries=total_queries,
        images=len({(t.image.dataset, t.image.path) for t in triplet_list}),
        tokens=total_tokens,
        avg_words=_avg_words_text(total_tokens, total_queries),
        modality_ratios=ratios,
        rows=tuple(rows),
    )


METRICS_CSV_HEADER = (
    "dataset,split,queries,images,tokens,avg_words,"
    "entity_density,morphology_coverage,morphology_mean_hits,spatial_complexity"
)


def render_metrics_csv(stats: Sequence[SplitStats]) -> str:
    lines = [METRICS_CSV_HEADER]
    for split_stats in stats:
        for row in split_stats.rows:
            lines.append(
                f"{row.dataset},{row.split},{row.queries},{row.images},{row.tokens},"
                f"{row.avg_words},{row.entity_density:.4f},"
                f"{row.morphology_coverage:.4f},{row.morphology_mean_hits:.4f},"
                f"{row.spatial_complexity:.4f}"
            )
    return "\n".join(lines) + "\n"


def split_stats_json(stats: SplitStats) -> dict[str, object]:
    return {
        "split": stats.split,
        "queries": stats.queries,
        "images": stats.images,
        "tokens": stats.tokens,
        "avg_words": stats.avg_words,
        "modality_ratios": stats.modality_ratios,
        "rows": [
            {
                "dataset": row.dataset,
                "split": row.split,
                "queries": row.queries,
                "images": row.images,
                "tokens": row.tokens,
                "avg_words": row.avg_words,
                "entity_density": row.entity_density,
                "morphology_coverage": row.morphology_coverage,
                "morphology_mean_hits": row.morphology_mean_hits,
                "spatial_complexity": row.spatial_complexity,
            }
            for row in stats.rows
        ],
    }
