"""Human audit sessions: vote log, majority aggregation, verified export.

A session holds an ordered triplet list and exactly three registered
annotators.  Votes land in an append-only JSONL event log and are
folded into per-triplet decisions; replaying the log reproduces the
same state, so the log file is the single source of truth across
restarts.  A re-vote by the same annotator supersedes the earlier one
rather than adding a fourth opinion.

Acceptance needs at least two good votes out of three; with fewer than
three votes the decision is pending and the triplet is excluded from
reports and blocks export.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from refground.core import ReferringTriplet, percent_text, serialize_triplet

VERDICTS = ("good", "bad")
QUORUM = 3
ACCEPT_THRESHOLD = 2

_EVENT_KEYS = ("triplet_id", "annotator", "verdict", "timestamp", "comment")


@dataclass(frozen=True)
class VoteEvent:
    triplet_id: str
    annotator: str
    verdict: str
    timestamp: float
    comment: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")


def vote(triplet_id: str, annotator: str, verdict: str, comment: str = "") -> VoteEvent:
    return VoteEvent(
        triplet_id=triplet_id,
        annotator=annotator,
        verdict=verdict,
        timestamp=time.time(),
        comment=comment,
    )


def serialize_event(event: VoteEvent) -> str:
    return json.dumps(
        {
            "triplet_id": event.triplet_id,
            "annotator": event.annotator,
            "verdict": event.verdict,
            "timestamp": event.timestamp,
            "comment": event.comment,
        },
        separators=(",", ":"),
        ensure_ascii=False,
    )


def parse_event(line: str) -> VoteEvent:
    record = json.loads(line)
    if not isinstance(record, dict) or tuple(record) != _EVENT_KEYS:
        raise ValueError(f"malformed vote event: keys {sorted(record)}")
    if not isinstance(record["timestamp"], (int, float)) or isinstance(
        record["timestamp"], bool
    ):
        raise ValueError("timestamp must be a number")
    for key in ("triplet_id", "annotator", "verdict", "comment"):
        if not isinstance(record[key], str):
            raise ValueError(f"{key} must be a string")
    return VoteEvent(
        triplet_id=record["triplet_id"],
        annotator=record["annotator"],
        verdict=record["verdict"],
        timestamp=float(record["timestamp"]),
        comment=record["comment"],
    )


@dataclass(frozen=True)
class AuditDecision:
    triplet_id: str
    good_votes: int
    total_votes: int
    accepted: bool
    pending: bool


class AuditSession:
    """Vote state for one triplet list and exactly three annotators."""

    def __init__(
        self,
        triplets: Sequence[ReferringTriplet],
        annotators: Sequence[str],
        log_path: Path | None = None,
    ) -> None:
        if len(annotators) != QUORUM:
            raise ValueError(f"exactly {QUORUM} annotators are required")
        if len(set(annotators)) != QUORUM:
            raise ValueError("annotator ids must be distinct")
        self.triplets = list(triplets)
        self.annotators = tuple(annotators)
        self._order = {t.id: i for i, t in enumerate(self.triplets)}
        if len(self._order) != len(self.triplets):
            raise ValueError("duplicate triplet ids in session")
        self._log_path = log_path
        self._lock = threading.Lock()
        # Live vote per (triplet, annotator); superseded votes are only
        # in the log file.
        self._votes: dict[tuple[str, str], VoteEvent] = {}
        if log_path is not None and log_path.exists():
            for line in log_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._apply(parse_event(line))

    def _apply(self, event: VoteEvent) -> None:
        if event.triplet_id not in self._order:
            raise ValueError(f"vote for unknown triplet {event.triplet_id!r}")
        if event.annotator not in self.annotators:
            raise ValueError(f"vote by unregistered annotator {event.annotator!r}")
        self._votes[(event.triplet_id, event.annotator)] = event

    def submit_vote(self, event: VoteEvent) -> AuditDecision:
        with self._lock:
            self._apply(event)
            if self._log_path is not None:
                with open(self._log_path, "a", encoding="utf-8") as handle:
                    handle.write(serialize_event(event) + "\n")
            return self._aggregate(event.triplet_id)

    def next_item(self, annotator: str) -> ReferringTriplet | None:
        """Lowest-ordinal triplet this annotator has not voted on."""
        if annotator not in self.annotators:
            raise ValueError(f"unknown annotator {annotator!r}")
        with self._lock:
            for triplet in self.triplets:
                if (triplet.id, annotator) not in self._votes:
                    return triplet
        return None

    def votes_for(self, triplet_id: str) -> list[VoteEvent]:
        if triplet_id not in self._order:
            raise ValueError(f"unknown triplet {triplet_id!r}")
        with self._lock:
            return [
                self._votes[(triplet_id, annotator)]
                for annotator in self.annotators
                if (triplet_id, annotator) in self._votes
            ]

    def _aggregate(self, triplet_id: str) -> AuditDecision:
        present = [
            self._votes[(triplet_id, a)]
            for a in self.annotators
            if (triplet_id, a) in self._votes
        ]
        good = sum(1 for event in present if event.verdict == "good")
        total = len(present)
        pending = total < QUORUM
        return AuditDecision(
            triplet_id=triplet_id,
            good_votes=good,
            total_votes=total,
            accepted=not pending and good >= ACCEPT_THRESHOLD,
            pending=pending,
        )

    def aggregate(self, triplet_id: str) -> AuditDecision:
        if triplet_id not in self._order:
            raise ValueError(f"unknown triplet {triplet_id!r}")
        with self._lock:
            return self._aggregate(triplet_id)

    def decisions(self) -> list[AuditDecision]:
        with self._lock:
            return [self._aggregate(t.id) for t in self.triplets]

    @property
    def complete(self) -> bool:
        return not any(decision.pending for decision in self.decisions())


@dataclass(frozen=True)
class AuditRow:
    dataset: str
    total: int
    good3: int
    good2: int
    good1: int
    good0: int
    ratio: str


@dataclass(frozen=True)
class AuditReport:
    rows: tuple[AuditRow, ...]
    partial: bool


def _row(dataset: str, counts: list[int]) -> AuditRow:
    good3, good2, good1, good0 = counts
    total = sum(counts)
    return AuditRow(
        dataset=dataset,
        total=total,
        good3=good3,
        good2=good2,
        good1=good1,
        good0=good0,
        ratio=percent_text(good3 + good2, total, places=2),
    )


def audit_report(session: AuditSession) -> AuditReport:
    """Vote-distribution rows per dataset plus a total row.

    Pending triplets are left out of the counts and flip the partial
    flag instead of producing misleading rows.
    """
    decisions = {d.triplet_id: d for d in session.decisions()}
    per_dataset: dict[str, list[int]] = {}
    totals = [0, 0, 0, 0]
    partial = False
    for triplet in session.triplets:
        decision = decisions[triplet.id]
        if decision.pending:
            partial = True
            continue
        counts = per_dataset.setdefault(triplet.image.dataset, [0, 0, 0, 0])
        slot = 3 - decision.good_votes
        counts[slot] += 1
        totals[slot] += 1
    rows = [_row(dataset, per_dataset[dataset]) for dataset in sorted(per_dataset)]
    if per_dataset:
        rows.append(_row("total", totals))
    return AuditReport(rows=tuple(rows), partial=partial)


AUDIT_CSV_HEADER = "dataset,total,good3,good2,good1,good0,good_ratio_pct"


def render_audit_csv(report: AuditReport) -> str:
    lines = [AUDIT_CSV_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.dataset},{row.total},{row.good3},{row.good2},"
            f"{row.good1},{row.good0},{row.ratio}"
        )
    if report.partial:
        lines.append("# warning: some triplets are missing votes")
    return "\n".join(lines) + "\n"


def export_verified(session: AuditSession) -> str:
    """JSONL of accepted triplets with an audit block, in session order.

    The audit block lists verdicts sorted by annotator id and omits
    timestamps and comments, so re-export of the same vote state is
    byte-identical.
    """
    decisions = {d.triplet_id: d for d in session.decisions()}
    pending = [tid for tid, d in decisions.items() if d.pending]
    if pending:
        raise ValueError(
            f"cannot export with pending decisions: {len(pending)} triplets unvoted"
        )
    lines = []
    for triplet in session.triplets:
        decision = decisions[triplet.id]
        if not decision.accepted:
            continue
        events = sorted(session.votes_for(triplet.id), key=lambda e: e.annotator)
        audit_block = {
            "good_votes": decision.good_votes,
            "accepted": True,
            "votes": [
                {"annotator": e.annotator, "verdict": e.verdict} for e in events
            ],
        }
        lines.append(serialize_triplet(triplet, audit=audit_block))
    return "\n".join(lines) + ("\n" if lines else "")


def accepted_triplets(session: AuditSession) -> list[ReferringTriplet]:
    decisions = {d.triplet_id: d for d in session.decisions()}
    return [t for t in session.triplets if decisions[t.id].accepted]


def load_triplets(lines: Iterable[str]) -> list[ReferringTriplet]:
    from refground.core import parse_triplet

    triplets = []
    for line in lines:
        if line.strip():
            triplets.append(parse_triplet(line))
    return triplets
