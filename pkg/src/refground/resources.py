"""Loaders for the bundled lexicon and gazetteer data files.

Files live under ``refground/data`` and are deliberately plain text so
they can be reviewed and edited without touching code: list files carry
one term per line, mapping files one ``term: value`` pair per line.
``#`` starts a comment, blank lines are skipped.  An alternative
directory with the same file names can be supplied to override any of
them (the pipeline's lexicon-directory setting).
"""

from __future__ import annotations

from importlib import resources as importlib_resources
from pathlib import Path

from refground.core import MODALITIES
from refground.textmatch import canonical_term

# File-name stems keyed by the public modality names.
MODALITY_FILE_KEYS = {
    "CT": "ct",
    "Ultrasound": "ultrasound",
    "Dermoscopy": "dermoscopy",
    "Nuclei": "nuclei",
    "Bacteria": "bacteria",
}

SIZE_TERMS_FILE = "size_terms.txt"
SPATIAL_PHRASES_FILE = "spatial_phrases.txt"
SPATIAL_RELATIONS_FILE = "spatial_relations.txt"
ENTITIES_FILE = "entities.txt"


def _read_data_lines(name: str, directory: Path | None) -> list[str]:
    if directory is not None:
        text = (Path(directory) / name).read_text(encoding="utf-8")
    else:
        text = (importlib_resources.files("refground") / "data" / name).read_text(
            encoding="utf-8"
        )
    lines: list[str] = []
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped and not stripped.startswith("#"):
            lines.append(stripped)
    return lines


def load_term_list(name: str, directory: Path | None = None) -> tuple[str, ...]:
    """Load a one-term-per-line file; canonicalized, order-preserving, unique."""
    seen: dict[str, None] = {}
    for line in _read_data_lines(name, directory):
        term = canonical_term(line)
        if term in seen:
            raise ValueError(f"duplicate term {term!r} in {name}")
        seen[term] = None
    return tuple(seen)


def load_term_mapping(name: str, directory: Path | None = None) -> dict[str, str]:
    """Load a ``term: value`` file into an ordered mapping."""
    mapping: dict[str, str] = {}
    for line in _read_data_lines(name, directory):
        term, sep, value = line.partition(":")
        if not sep or not term.strip() or not value.strip():
            raise ValueError(f"malformed mapping line in {name}: {line!r}")
        key = canonical_term(term)
        if key in mapping:
            raise ValueError(f"duplicate term {key!r} in {name}")
        mapping[key] = value.strip().lower()
    return mapping


def deny_file(modality: str) -> str:
    return f"deny_{MODALITY_FILE_KEYS[modality]}.txt"


def morphology_file(modality: str) -> str:
    return f"morphology_{MODALITY_FILE_KEYS[modality]}.txt"


def load_deny_terms(modality: str, directory: Path | None = None) -> tuple[str, ...]:
    return load_term_list(deny_file(modality), directory)


def load_morphology_terms(modality: str, directory: Path | None = None) -> tuple[str, ...]:
    return load_term_list(morphology_file(modality), directory)


def load_all_deny(directory: Path | None = None) -> dict[str, tuple[str, ...]]:
    return {m: load_deny_terms(m, directory) for m in MODALITIES}


def load_all_morphology(directory: Path | None = None) -> dict[str, tuple[str, ...]]:
    return {m: load_morphology_terms(m, directory) for m in MODALITIES}
