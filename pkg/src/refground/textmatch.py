"""Shared tokenizer and word-boundary term matching.

Every text metric and lexicon check in the pipeline goes through this
module so that word counts, term hits, and deny-list scans can never
drift apart.  Matching is case-insensitive, anchored on word
boundaries (so "scan" never fires inside "scant"), longest-match
first, and non-overlapping.
"""

from __future__ import annotations

import re
from typing import Iterable


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization; the single word-count authority."""
    return text.split()


def word_count(text: str) -> int:
    return len(tokenize(text))


def canonical_term(term: str) -> str:
    """Lower-case and collapse internal whitespace."""
    return " ".join(term.lower().split())


def compile_terms(terms: Iterable[str]) -> re.Pattern[str] | None:
    """Compile a term list into one scanning pattern.

    Alternatives are ordered longest first, which makes Python's
    leftmost-first alternation behave as leftmost-longest, e.g.
    "upper left" wins over "left" at the same position.  Multi-word
    terms tolerate any internal whitespace.  Returns None for an
    empty list.
    """
    unique = sorted(
        {canonical_term(t) for t in terms if canonical_term(t)},
        key=lambda t: (-len(t), t),
    )
    if not unique:
        return None
    parts = [r"\s+".join(re.escape(word) for word in term.split()) for term in unique]
    return re.compile(r"(?<!\w)(?:" + "|".join(parts) + r")(?!\w)", re.IGNORECASE)


def find_terms(text: str, pattern: re.Pattern[str] | None) -> list[str]:
    """All non-overlapping matches, canonicalized, in text order."""
    if pattern is None:
        return []
    return [canonical_term(m.group(0)) for m in pattern.finditer(text)]


def unique_terms(text: str, pattern: re.Pattern[str] | None) -> set[str]:
    return set(find_terms(text, pattern))


def first_term(text: str, pattern: re.Pattern[str] | None) -> str | None:
    """First matching term, or None; used for deny-list reporting."""
    if pattern is None:
        return None
    match = pattern.search(text)
    return canonical_term(match.group(0)) if match else None
