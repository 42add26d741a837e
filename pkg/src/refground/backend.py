"""Generation backends: a deterministic mock and a live chat client.

The mock backend is a product feature, not a test shim: it lets the
whole pipeline run offline.  Its responses are derived from a hash of
(sample id, target indices), so every run over the same inputs is
byte-identical.  Failure injection is tunable per stage: a corruption
rate for schema violations, a mismatch rate for attribute
contradictions, and an ambiguity rate that plants the token the mock
judge rejects.

The live backend speaks an OpenAI-compatible chat-completions wire
protocol over HTTP with images attached as base64 data URLs.  It
retries transient failures with exponential backoff and is internally
synchronized: a concurrency semaphore plus an optional global rate
limiter, so callers may share one instance across worker threads.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from refground.core import NormBox
from refground.masks import CandidatePool
from refground.resources import (
    SIZE_TERMS_FILE,
    load_morphology_terms,
    load_term_mapping,
)
from refground.synthesis import PromptBundle, SynthesizedQuery, serialize_query


class BackendError(RuntimeError):
    """Base class for backend failures."""


class BackendAuthError(BackendError):
    """Authentication or authorization failure; retrying cannot help."""


class BackendRequestError(BackendError):
    """The request itself was rejected (payload too large, bad schema)."""


class BackendUnavailableError(BackendError):
    """Transient failures exhausted the retry budget."""


@dataclass(frozen=True)
class GenerationRequest:
    """Everything a backend needs to draft one query."""

    sample_id: str
    bundle: PromptBundle
    pool: CandidatePool
    target_indices: tuple[int, ...]
    image_bytes: bytes | None = None


@dataclass(frozen=True)
class JudgeRequest:
    """Everything a backend needs to judge one drafted triplet."""

    sample_id: str
    query: str
    boxes: tuple[NormBox, ...]
    system_prompt: str
    user_prompt: str
    image_bytes: bytes | None = None


class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...

    def judge(self, request: JudgeRequest) -> str: ...


# --- mock backend -----------------------------------------------------------

AMBIGUOUS_TOKEN = "AMBIG"

_CORRUPTION_KINDS = (
    "truncated",
    "missing_key",
    "extra_key",
    "bad_index",
    "box_off",
    "empty_question",
)

# (singular, plural) nouns per modality; chosen to stay clear of the
# size/spatial lexicons so clean questions always pass the rule stage.
_NOUNS = {
    "CT": (("lesion", "lesions"), ("nodule", "nodules"), ("opacity", "opacities")),
    "Ultrasound": (("nodule", "nodules"), ("lesion", "lesions"), ("mass", "masses")),
    "Dermoscopy": (("lesion", "lesions"), ("mole", "moles"), ("growth", "growths")),
    "Nuclei": (("nucleus", "nuclei"), ("cell", "cells"), ("cluster", "clusters")),
    "Bacteria": (("colony", "colonies"), ("cluster", "clusters"), ("formation", "formations")),
}

_TEMPLATES = (
    "locate the {adj} {morph} {noun} in the {loc} part of the image",
    "identify the {adj} {morph} {noun} toward the {loc} region",
    "find the {noun} that appears {morph} and {adj} in the {loc} area",
    "point out the {adj} {morph} {noun} within the {loc} portion of the frame",
)

_MULTI_TEMPLATE = (
    "locate the {count} {morph} {plural} including the {adj} one in the {loc} "
    "part of the image"
)


def _location_phrase(horiz: str, vert: str, rng: random.Random) -> str:
    lateral = horiz in ("left", "right")
    vertical = vert in ("upper", "lower")
    if lateral and vertical:
        return f"{vert} {horiz}"
    if lateral:
        return horiz
    if vertical:
        return vert
    return rng.choice(("central", "middle"))


class MockBackend:
    """Deterministic offline backend with tunable failure injection.

    Rates partition the unit interval: a draw below ``corruption_rate``
    yields a schema-invalid response (format-stage failure), the next
    ``mismatch_rate`` slice yields a size adjective from the wrong
    bucket (rule-stage failure), and the next ``ambiguous_rate`` slice
    plants the ambiguity token (judge-stage failure).
    """

    def __init__(
        self,
        corruption_rate: float = 0.0,
        mismatch_rate: float = 0.0,
        ambiguous_rate: float = 0.0,
        lexicon_dir: Path | None = None,
    ) -> None:
        for name, rate in (
            ("corruption_rate", corruption_rate),
            ("mismatch_rate", mismatch_rate),
            ("ambiguous_rate", ambiguous_rate),
        ):
            if rate < 0.0 or rate > 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if corruption_rate + mismatch_rate + ambiguous_rate > 1.0:
            raise ValueError("failure rates must sum to at most 1")
        self.corruption_rate = corruption_rate
        self.mismatch_rate = mismatch_rate
        self.ambiguous_rate = ambiguous_rate
        size_map = load_term_mapping(SIZE_TERMS_FILE, lexicon_dir)
        self._adjectives: dict[str, list[str]] = {}
        for term, bucket in size_map.items():
            self._adjectives.setdefault(bucket, []).append(term)
        self._morphology = {
            modality: load_morphology_terms(modality, lexicon_dir)
            for modality in _NOUNS
        }

    def _rng(self, sample_id: str, indices: tuple[int, ...]) -> random.Random:
        key = f"{sample_id}|{','.join(str(i) for i in indices)}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def _question(
        self, request: GenerationRequest, rng: random.Random, wrong_size: bool
    ) -> str:
        pool = request.pool
        indices = request.target_indices
        lead = pool.entries[indices[0]].attributes
        bucket = lead.size_bucket
        if wrong_size:
            others = [b for b in ("tiny", "small", "medium", "large") if b != bucket]
            bucket = rng.choice(others)
        adj = rng.choice(self._adjectives[bucket])
        morph = rng.choice(self._morphology[pool.image.modality])
        loc = _location_phrase(lead.horiz_bin, lead.vert_bin, rng)
        singular, plural = rng.choice(_NOUNS[pool.image.modality])
        if len(indices) == 1:
            template = rng.choice(_TEMPLATES)
            return template.format(adj=adj, morph=morph, noun=singular, loc=loc)
        return _MULTI_TEMPLATE.format(
            count=len(indices), morph=morph, plural=plural, adj=adj, loc=loc
        )

    def _valid_response(
        self, request: GenerationRequest, rng: random.Random, question: str
    ) -> str:
        query = SynthesizedQuery(
            question=question,
            target_indices=request.target_indices,
            boxes=tuple(
                request.pool.entries[i].box for i in request.target_indices
            ),
        )
        return serialize_query(query)

    def _corrupted_response(
        self, request: GenerationRequest, rng: random.Random
    ) -> str:
        kind = rng.choice(_CORRUPTION_KINDS)
        question = self._question(request, rng, wrong_size=False)
        valid = self._valid_response(request, rng, question)
        record = json.loads(valid)
        if kind == "truncated":
            return valid[: len(valid) // 2]
        if kind == "missing_key":
            del record["boxes"]
        elif kind == "extra_key":
            record["note"] = "high confidence"
        elif kind == "bad_index":
            record["target_indices"] = [len(request.pool.entries)]
        elif kind == "box_off":
            record["boxes"][0][0] += 1
        elif kind == "empty_question":
            record["question"] = ""
        return json.dumps(record, separators=(", ", ": "), ensure_ascii=False)

    def generate(self, request: GenerationRequest) -> str:
        rng = self._rng(request.sample_id, request.target_indices)
        draw = rng.random()
        if draw < self.corruption_rate:
            return self._corrupted_response(request, rng)
        if draw < self.corruption_rate + self.mismatch_rate:
            question = self._question(request, rng, wrong_size=True)
            return self._valid_response(request, rng, question)
        question = self._question(request, rng, wrong_size=False)
        if draw < self.corruption_rate + self.mismatch_rate + self.ambiguous_rate:
            question = f"{question} {AMBIGUOUS_TOKEN}"
        return self._valid_response(request, rng, question)

    def judge(self, request: JudgeRequest) -> str:
        coords = [box.as_list() for box in request.boxes]
        if AMBIGUOUS_TOKEN in request.query:
            verdict = {
                "grounded": True,
                "unambiguous": False,
                "restatement": f"query could describe several regions near {coords}",
                "reason": "more than one candidate fits the description",
            }
        else:
            verdict = {
                "grounded": True,
                "unambiguous": True,
                "restatement": f"query describes the region at {coords}",
                "reason": "description matches the highlighted region",
            }
        return json.dumps(verdict, separators=(", ", ": "), ensure_ascii=False)


# --- live backend -----------------------------------------------------------


@dataclass(frozen=True)
class BackendConfig:
    """Connection settings for an OpenAI-compatible chat endpoint."""

    endpoint: str
    model: str
    api_key_env: str = "REFGROUND_API_KEY"
    temperature: float = 0.7
    judge_temperature: float = 0.0
    max_retries: int = 3
    backoff_base_seconds: float = 0.5
    concurrency: int = 4
    rate_limit_per_second: float = 0.0
    timeout_seconds: float = 60.0
    transcript_path: str | None = None


def _data_url(image_bytes: bytes) -> str:
    return "data:image/png;base64," + base64.b64encode(image_bytes).decode("ascii")


class LiveBackend:
    """Shared, internally synchronized client for a live chat endpoint."""

    def __init__(
        self, config: BackendConfig, transport: httpx.BaseTransport | None = None
    ) -> None:
        api_key = os.environ.get(config.api_key_env)
        if not api_key:
            raise BackendAuthError(
                f"environment variable {config.api_key_env} is not set"
            )
        self._config = config
        self._url = config.endpoint.rstrip("/") + "/chat/completions"
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = httpx.Client(
            timeout=config.timeout_seconds, transport=transport
        )
        self._semaphore = threading.Semaphore(max(1, config.concurrency))
        self._rate_lock = threading.Lock()
        self._next_slot = 0.0
        self._log_lock = threading.Lock()

    def close(self) -> None:
        self._client.close()

    def _throttle(self) -> None:
        rate = self._config.rate_limit_per_second
        if rate <= 0:
            return
        with self._rate_lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + 1.0 / rate
        if wait > 0:
            time.sleep(wait)

    def _log_transcript(self, kind: str, sample_id: str, response: str) -> None:
        path = self._config.transcript_path
        if path is None:
            return
        entry = {
            "ts": time.time(),
            "kind": kind,
            "sample_id": sample_id,
            "model": self._config.model,
            "response": response,
        }
        with self._log_lock:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def _chat(
        self,
        kind: str,
        sample_id: str,
        system_prompt: str,
        user_prompt: str,
        image_bytes: bytes | None,
        temperature: float,
    ) -> str:
        content: list[dict[str, object]] = [{"type": "text", "text": user_prompt}]
        if image_bytes is not None:
            content.append(
                {"type": "image_url", "image_url": {"url": _data_url(image_bytes)}}
            )
        payload = {
            "model": self._config.model,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": content},
            ],
        }
        last_error: str = "no attempt made"
        with self._semaphore:
            for attempt in range(self._config.max_retries + 1):
                if attempt > 0 and self._config.backoff_base_seconds > 0:
                    time.sleep(self._config.backoff_base_seconds * 2 ** (attempt - 1))
                self._throttle()
                try:
                    response = self._client.post(
                        self._url, json=payload, headers=self._headers
                    )
                except httpx.HTTPError as exc:
                    last_error = f"transport error: {exc}"
                    continue
                if response.status_code in (401, 403):
                    raise BackendAuthError(
                        f"backend rejected credentials ({response.status_code})"
                    )
                if response.status_code == 413:
                    raise BackendRequestError("payload too large")
                if response.status_code == 429 or response.status_code >= 500:
                    last_error = f"status {response.status_code}"
                    continue
                if response.status_code != 200:
                    raise BackendRequestError(
                        f"backend returned status {response.status_code}"
                    )
                try:
                    text = response.json()["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise BackendRequestError(
                        f"malformed backend response: {exc}"
                    ) from exc
                if not isinstance(text, str):
                    raise BackendRequestError("backend content is not text")
                self._log_transcript(kind, sample_id, text)
                return text
        raise BackendUnavailableError(
            f"backend unavailable after {self._config.max_retries + 1} attempts "
            f"({last_error})"
        )

    def generate(self, request: GenerationRequest) -> str:
        return self._chat(
            "generate",
            request.sample_id,
            request.bundle.system_prompt,
            request.bundle.user_prompt,
            request.image_bytes,
            self._config.temperature,
        )

    def judge(self, request: JudgeRequest) -> str:
        return self._chat(
            "judge",
            request.sample_id,
            request.system_prompt,
            request.user_prompt,
            request.image_bytes,
            self._config.judge_temperature,
        )
