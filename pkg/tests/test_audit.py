from __future__ import annotations

from pathlib import Path

import pytest

from refground.audit import (
    AuditSession,
    VoteEvent,
    audit_report,
    export_verified,
    accepted_triplets,
    render_audit_csv,
    vote,
)
from refground.core import (
    STAGE_ORDER,
    ImageRef,
    NormBox,
    StageEntry,
    ReferringTriplet,
    parse_triplet,
    read_audit_block,
)

ANNOTATORS = ("ann_a", "ann_b", "ann_c")


def make_triplet(tid: str, dataset: str = "demo") -> ReferringTriplet:
    image = ImageRef(dataset, f"{tid}.png", 64, 64, "CT")
    log = tuple(StageEntry(stage, True, "ok") for stage in STAGE_ORDER)
    return ReferringTriplet(
        id=tid,
        image=image,
        query=f"query for {tid}",
        answer_boxes=(NormBox(0, 0, 100, 100),),
        candidate_count=1,
        generator="mock",
        stage_log=log,
    )


def make_session(
    n: int = 3, log_path: Path | None = None, dataset: str = "demo"
) -> AuditSession:
    triplets = [make_triplet(f"t{i}", dataset=dataset) for i in range(n)]
    return AuditSession(triplets, ANNOTATORS, log_path=log_path)


def cast(session: AuditSession, tid: str, verdicts: list[str]) -> None:
    for annotator, verdict in zip(ANNOTATORS, verdicts):
        session.submit_vote(vote(tid, annotator, verdict))


def test_vote_event_validates_verdict() -> None:
    with pytest.raises(ValueError):
        VoteEvent("t0", "ann_a", "maybe", 0.0)


def test_session_requires_three_distinct_annotators() -> None:
    triplets = [make_triplet("t0")]
    with pytest.raises(ValueError):
        AuditSession(triplets, ("a", "b"))
    with pytest.raises(ValueError):
        AuditSession(triplets, ("a", "a", "b"))
    with pytest.raises(ValueError):
        AuditSession([make_triplet("dup"), make_triplet("dup")], ANNOTATORS)


def test_first_vote_counts() -> None:
    session = make_session()
    decision = session.submit_vote(vote("t0", "ann_a", "good"))
    assert decision.good_votes == 1
    assert decision.total_votes == 1
    assert decision.pending


def test_revote_supersedes() -> None:
    session = make_session()
    session.submit_vote(vote("t0", "ann_a", "good"))
    decision = session.submit_vote(vote("t0", "ann_a", "bad"))
    assert decision.good_votes == 0
    assert decision.total_votes == 1


def test_vote_for_unknown_triplet_rejected() -> None:
    session = make_session()
    with pytest.raises(ValueError):
        session.submit_vote(vote("ghost", "ann_a", "good"))


def test_vote_by_unregistered_annotator_rejected() -> None:
    session = make_session()
    with pytest.raises(ValueError):
        session.submit_vote(vote("t0", "intruder", "good"))


def test_majority_rule() -> None:
    session = make_session()
    cast(session, "t0", ["good", "good", "bad"])
    assert session.aggregate("t0").accepted
    cast(session, "t1", ["good", "bad", "bad"])
    decision = session.aggregate("t1")
    assert not decision.accepted
    assert not decision.pending


def test_two_votes_is_pending() -> None:
    session = make_session()
    session.submit_vote(vote("t0", "ann_a", "good"))
    decision = session.submit_vote(vote("t0", "ann_b", "good"))
    assert decision.pending
    assert not decision.accepted


def test_next_item_per_annotator_cursor() -> None:
    session = make_session(n=2)
    assert session.next_item("ann_a").id == "t0"
    session.submit_vote(vote("t0", "ann_a", "good"))
    assert session.next_item("ann_a").id == "t1"
    # A second annotator still starts from the top.
    assert session.next_item("ann_b").id == "t0"
    session.submit_vote(vote("t1", "ann_a", "bad"))
    assert session.next_item("ann_a") is None
    with pytest.raises(ValueError):
        session.next_item("intruder")


def test_log_replay_reproduces_state(tmp_path: Path) -> None:
    log = tmp_path / "votes.jsonl"
    session = make_session(log_path=log)
    cast(session, "t0", ["good", "good", "bad"])
    cast(session, "t1", ["bad", "bad", "bad"])
    session.submit_vote(vote("t2", "ann_a", "good"))
    session.submit_vote(vote("t2", "ann_a", "bad"))

    replayed = make_session(log_path=log)
    assert replayed.decisions() == session.decisions()
    assert replayed.aggregate("t2").good_votes == 0
    assert replayed.aggregate("t2").total_votes == 1
    # The log keeps every event, including the superseded one.
    assert len(log.read_text().splitlines()) == 8


def test_report_published_distribution() -> None:
    triplets = [make_triplet(f"t{i}", dataset="TestSplit") for i in range(1141)]
    session = AuditSession(triplets, ANNOTATORS)
    patterns = {
        3: ["good", "good", "good"],
        2: ["good", "good", "bad"],
        1: ["good", "bad", "bad"],
        0: ["bad", "bad", "bad"],
    }
    plan = [3] * 938 + [2] * 142 + [1] * 34 + [0] * 27
    for triplet, good in zip(triplets, plan):
        cast(session, triplet.id, patterns[good])
    report = audit_report(session)
    assert not report.partial
    row = report.rows[0]
    assert (row.total, row.good3, row.good2, row.good1, row.good0) == (
        1141,
        938,
        142,
        34,
        27,
    )
    assert row.ratio == "94.65"
    assert row.good3 + row.good2 + row.good1 + row.good0 == row.total


def test_report_aggregate_accept_rate() -> None:
    triplets = [make_triplet(f"a{i}", dataset="alpha") for i in range(20)]
    triplets += [make_triplet(f"b{i}", dataset="beta") for i in range(30)]
    session = AuditSession(triplets, ANNOTATORS)
    for i in range(20):
        verdicts = ["good"] * 3 if i < 15 else ["good", "bad", "bad"]
        cast(session, f"a{i}", verdicts)
    for i in range(30):
        if i < 12:
            verdicts = ["good", "good", "good"]
        elif i < 24:
            verdicts = ["good", "good", "bad"]
        else:
            verdicts = ["bad", "bad", "bad"]
        cast(session, f"b{i}", verdicts)
    report = audit_report(session)
    total = report.rows[-1]
    assert total.dataset == "total"
    assert total.total == 50
    assert total.good3 + total.good2 == 39
    assert total.ratio == "78.00"


def test_report_all_bad_dataset() -> None:
    session = make_session()
    for tid in ("t0", "t1", "t2"):
        cast(session, tid, ["bad", "bad", "bad"])
    report = audit_report(session)
    assert report.rows[0].ratio == "0.00"


def test_partial_report_flags_and_excludes_pending() -> None:
    session = make_session()
    cast(session, "t0", ["good", "good", "good"])
    session.submit_vote(vote("t1", "ann_a", "good"))
    report = audit_report(session)
    assert report.partial
    assert report.rows[0].total == 1
    text = render_audit_csv(report)
    assert "# warning" in text
    assert text.splitlines()[0] == "dataset,total,good3,good2,good1,good0,good_ratio_pct"


def test_export_emits_only_accepted(tmp_path: Path) -> None:
    session = make_session(n=10)
    for i in range(10):
        verdicts = ["good", "good", "bad"] if i < 7 else ["bad", "bad", "good"]
        cast(session, f"t{i}", verdicts)
    exported = export_verified(session)
    lines = exported.strip().splitlines()
    assert len(lines) == 7
    for line in lines:
        triplet = parse_triplet(line)
        audit = read_audit_block(line)
        assert audit is not None
        assert audit["accepted"] is True
        assert audit["good_votes"] == 2
        assert [v["annotator"] for v in audit["votes"]] == list(ANNOTATORS)
        assert triplet.id.startswith("t")
    assert export_verified(session) == exported
    assert [t.id for t in accepted_triplets(session)] == [f"t{i}" for i in range(7)]


def test_export_refuses_pending() -> None:
    session = make_session()
    cast(session, "t0", ["good", "good", "good"])
    with pytest.raises(ValueError):
        export_verified(session)


def test_export_membership_matches_aggregate() -> None:
    session = make_session(n=6)
    verdict_sets = [
        ["good", "good", "good"],
        ["good", "good", "bad"],
        ["good", "bad", "good"],
        ["bad", "bad", "good"],
        ["bad", "good", "bad"],
        ["bad", "bad", "bad"],
    ]
    for i, verdicts in enumerate(verdict_sets):
        cast(session, f"t{i}", verdicts)
    exported_ids = [parse_triplet(line).id for line in export_verified(session).splitlines()]
    expected = [d.triplet_id for d in session.decisions() if d.accepted]
    assert exported_ids == expected == ["t0", "t1", "t2"]
