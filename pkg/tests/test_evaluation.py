from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refground.core import GRID, STAGE_ORDER, ImageRef, NormBox, ReferringTriplet, StageEntry
from refground.evaluation import (
    EvalConfig,
    build_pair_set,
    evaluate_split,
    iou,
    match_and_score,
    parse_prediction,
    prediction_record,
    render_eval_csv,
    render_ss_csv,
    score_records,
    semantic_sensitivity,
)
from oracle_utils import brute_force_assignment, fraction_iou


def make_triplet(
    tid: str,
    boxes: list[NormBox],
    dataset: str = "demo",
    path: str = "img0.png",
) -> ReferringTriplet:
    image = ImageRef(dataset, path, 64, 64, "CT")
    log = tuple(StageEntry(stage, True, "ok") for stage in STAGE_ORDER)
    return ReferringTriplet(
        id=tid,
        image=image,
        query=f"query for {tid}",
        answer_boxes=tuple(boxes),
        candidate_count=len(boxes),
        generator="mock",
        stage_log=log,
    )


def norm_boxes() -> st.SearchStrategy[NormBox]:
    def build(x: list[int], y: list[int]) -> NormBox:
        return NormBox(min(x), min(y), max(x), max(y))

    coords = st.lists(
        st.integers(min_value=0, max_value=GRID), min_size=2, max_size=2, unique=True
    )
    return st.builds(build, coords, coords)


def test_parse_prediction_single_box() -> None:
    boxes = parse_prediction("The lesion is at [100, 200, 300, 400].")
    assert boxes == (NormBox(100, 200, 300, 400),)


def test_parse_prediction_repairs_swapped_corners() -> None:
    assert parse_prediction("[300,400,100,200]") == (NormBox(100, 200, 300, 400),)


def test_parse_prediction_clamps_out_of_range() -> None:
    assert parse_prediction("[-50, 0, 1200, 500]") == (NormBox(0, 0, 1000, 500),)


def test_parse_prediction_drops_degenerate() -> None:
    assert parse_prediction("[100, 100, 100, 400]") == ()


def test_parse_prediction_no_box() -> None:
    record = prediction_record("t1", "no box found")
    assert record.boxes == ()
    assert not record.parsed


def test_parse_prediction_multiple_boxes() -> None:
    text = "first [0,0,10,10] then [ 20 , 20 , 30 , 30 ]"
    assert parse_prediction(text) == (NormBox(0, 0, 10, 10), NormBox(20, 20, 30, 30))


def test_iou_identity_and_disjoint() -> None:
    a = NormBox(0, 0, 100, 100)
    assert iou(a, a) == 1.0
    assert iou(a, NormBox(500, 500, 600, 600)) == 0.0


def test_iou_worked_example() -> None:
    value = iou(NormBox(0, 0, 100, 100), NormBox(50, 50, 150, 150))
    assert value == pytest.approx(2500 / 17500, abs=1e-12)


@settings(max_examples=300)
@given(a=norm_boxes(), b=norm_boxes())
def test_iou_matches_rational_oracle(a: NormBox, b: NormBox) -> None:
    expected = fraction_iou(tuple(a.as_list()), tuple(b.as_list()))
    value = iou(a, b)
    assert abs(value - float(expected)) < 1e-12
    assert iou(b, a) == value
    assert 0.0 <= value <= 1.0
    assert (value == 1.0) == (a == b)


def test_eval_config_validation() -> None:
    with pytest.raises(ValueError):
        EvalConfig(tau=0.0)
    with pytest.raises(ValueError):
        EvalConfig(tau=1.0)
    with pytest.raises(ValueError):
        EvalConfig(policy="hungarian")


CONFIG = EvalConfig()


def test_match_single_perfect_pred() -> None:
    box = NormBox(10, 10, 200, 200)
    record = match_and_score("t", [box], [box], CONFIG)
    assert record.mean_iou == 1.0
    assert record.per_target_iou == (1.0,)
    assert record.assignment == ((0, 0),)


def test_match_no_preds_scores_zero() -> None:
    record = match_and_score(
        "t", [], [NormBox(0, 0, 10, 10), NormBox(20, 20, 30, 30)], CONFIG
    )
    assert record.mean_iou == 0.0
    assert record.per_target_iou == (0.0, 0.0)
    assert record.assignment == ()


def test_match_requires_targets() -> None:
    with pytest.raises(ValueError):
        match_and_score("t", [NormBox(0, 0, 10, 10)], [], CONFIG)


# Constructed so greedy grabs the 0.6 pair and strands the second
# target, while the optimal assignment takes 0.55 + 0.2.
GREEDY_TRAP_TARGETS = [NormBox(0, 0, 400, 1000), NormBox(420, 0, 500, 1000)]
GREEDY_TRAP_PREDS = [NormBox(100, 0, 500, 1000), NormBox(0, 0, 220, 1000)]


def test_optimal_beats_greedy_on_trap() -> None:
    optimal = match_and_score("t", GREEDY_TRAP_PREDS, GREEDY_TRAP_TARGETS, CONFIG)
    greedy = match_and_score(
        "t", GREEDY_TRAP_PREDS, GREEDY_TRAP_TARGETS, EvalConfig(policy="greedy")
    )
    assert greedy.mean_iou == pytest.approx(0.3)
    assert optimal.mean_iou == pytest.approx(0.375)
    assert optimal.assignment == ((1, 0), (0, 1))
    expected_total = brute_force_assignment(
        [[iou(p, t) for t in GREEDY_TRAP_TARGETS] for p in GREEDY_TRAP_PREDS]
    )
    assert optimal.mean_iou == pytest.approx(expected_total / 2)


@settings(max_examples=150, deadline=None)
@given(
    preds=st.lists(norm_boxes(), min_size=0, max_size=4),
    targets=st.lists(norm_boxes(), min_size=1, max_size=4),
)
def test_optimal_matches_brute_force(
    preds: list[NormBox], targets: list[NormBox]
) -> None:
    record = match_and_score("t", preds, targets, CONFIG)
    matrix = [[iou(p, t) for t in targets] for p in preds]
    best = brute_force_assignment(matrix)
    assert record.mean_iou == pytest.approx(best / len(targets), abs=1e-12)
    greedy = match_and_score("t", preds, targets, EvalConfig(policy="greedy"))
    assert record.mean_iou >= greedy.mean_iou - 1e-12
    # The assignment must be injective on both sides.
    pred_ids = [p for p, _ in record.assignment]
    target_ids = [t for _, t in record.assignment]
    assert len(set(pred_ids)) == len(pred_ids)
    assert len(set(target_ids)) == len(target_ids)


def test_score_records_rejects_unknown_id() -> None:
    triplets = [make_triplet("known", [NormBox(0, 0, 10, 10)])]
    with pytest.raises(ValueError):
        score_records([prediction_record("ghost", "[0,0,10,10]")], triplets, CONFIG)


def fixture_split() -> tuple[list, list]:
    """Four one-target triplets with per-target IoUs 1.0, 0.6, 0.0, 0.0."""
    target = NormBox(0, 0, 500, 200)
    triplets = [
        make_triplet("t1", [target], path="a.png"),
        make_triplet("t2", [target], path="b.png"),
        make_triplet("t3", [target], path="c.png"),
        make_triplet("t4", [target], path="d.png"),
    ]
    # 0.6 overlap: pred (0,0,500,120) inside target (0,0,500,200):
    # inter 60000, union 100000.
    predictions = [
        prediction_record("t1", "[0,0,500,200]"),
        prediction_record("t2", "[0,0,500,120]"),
        prediction_record("t3", "no box found"),
    ]
    return predictions, triplets


def test_fixture_ious_are_as_designed() -> None:
    assert iou(NormBox(0, 0, 500, 120), NormBox(0, 0, 500, 200)) == pytest.approx(0.6)


def test_evaluate_split_table_value() -> None:
    predictions, triplets = fixture_split()
    report = evaluate_split(predictions, triplets, CONFIG)
    row = report.rows[0]
    assert row.dataset == "demo"
    assert row.samples == 4
    assert row.mean_iou_x100 == "40.0"
    assert row.acc_at_half == "50.0"
    assert report.rows[-1].dataset == "total"
    assert report.warnings == ()


def test_evaluate_split_all_perfect() -> None:
    box = NormBox(100, 100, 300, 300)
    triplets = [make_triplet("p1", [box]), make_triplet("p2", [box], path="z.png")]
    predictions = [
        prediction_record("p1", "[100,100,300,300]"),
        prediction_record("p2", "[100,100,300,300]"),
    ]
    report = evaluate_split(predictions, triplets, CONFIG)
    assert report.rows[0].mean_iou_x100 == "100.0"
    assert report.rows[0].acc_at_half == "100.0"


def test_evaluate_split_empty_predictions_warns() -> None:
    _, triplets = fixture_split()
    report = evaluate_split([], triplets, CONFIG)
    assert report.rows[0].mean_iou_x100 == "0.0"
    assert len(report.warnings) == 1
    text = render_eval_csv(report)
    assert "# warning:" in text


def test_evaluate_split_order_invariant() -> None:
    predictions, triplets = fixture_split()
    forward = evaluate_split(predictions, triplets, CONFIG)
    backward = evaluate_split(list(reversed(predictions)), triplets, CONFIG)
    assert forward == backward


def test_render_eval_csv_shape() -> None:
    predictions, triplets = fixture_split()
    text = render_eval_csv(evaluate_split(predictions, triplets, CONFIG))
    lines = text.splitlines()
    assert lines[0] == "dataset,samples,mean_iou_x100,acc_at_0.5"
    assert lines[1] == "demo,4,40.0,50.0"
    assert lines[2] == "total,4,40.0,50.0"


def ss_fixture() -> tuple[list, dict]:
    """Three pairs scoring 1, 1, 0 at tau 0.5."""
    left = NormBox(0, 0, 300, 1000)
    right = NormBox(700, 0, 1000, 1000)
    triplets = []
    predictions = []
    # Pair on image a: both localized (IoU 1.0 each).
    triplets += [
        make_triplet("a1", [left], path="a.png"),
        make_triplet("a2", [right], path="a.png"),
    ]
    predictions += [
        prediction_record("a1", "[0,0,300,1000]"),
        prediction_record("a2", "[700,0,1000,1000]"),
    ]
    # Pair on image b: both above tau but imperfect (IoU 0.7).
    triplets += [
        make_triplet("b1", [left], path="b.png"),
        make_triplet("b2", [right], path="b.png"),
    ]
    predictions += [
        prediction_record("b1", "[0,0,300,700]"),
        prediction_record("b2", "[700,300,1000,1000]"),
    ]
    # Pair on image c: one side misses entirely.
    triplets += [
        make_triplet("c1", [left], path="c.png"),
        make_triplet("c2", [right], path="c.png"),
    ]
    predictions += [
        prediction_record("c1", "[0,0,300,1000]"),
        prediction_record("c2", "no box"),
    ]
    return predictions, {"triplets": triplets}


def test_semantic_sensitivity_fixture() -> None:
    predictions, bundle = ss_fixture()
    triplets = bundle["triplets"]
    pairs = build_pair_set(triplets)
    assert len(pairs) == 3
    scored = score_records(predictions, triplets, CONFIG)
    value = semantic_sensitivity(pairs, scored, CONFIG)
    assert value == pytest.approx(200 / 3)
    text = render_ss_csv(pairs, scored, taus=[0.5])
    assert text.splitlines()[1] == "0.5,3,66.7"


def test_semantic_sensitivity_monotone_in_tau() -> None:
    predictions, bundle = ss_fixture()
    triplets = bundle["triplets"]
    pairs = build_pair_set(triplets)
    scored = score_records(predictions, triplets, CONFIG)
    taus = [i / 10 for i in range(1, 10)]
    values = [
        semantic_sensitivity(pairs, scored, EvalConfig(tau=tau)) for tau in taus
    ]
    for earlier, later in zip(values, values[1:]):
        assert later <= earlier


def test_semantic_sensitivity_rejects_shared_target() -> None:
    box = NormBox(0, 0, 100, 100)
    a = make_triplet("s1", [box], path="a.png")
    b = make_triplet("s2", [box], path="a.png")
    scored = score_records([], [a, b], CONFIG)
    with pytest.raises(ValueError):
        semantic_sensitivity([(a, b)], scored, CONFIG)


def test_build_pair_set_counts() -> None:
    boxes = [
        NormBox(0, 0, 100, 100),
        NormBox(200, 200, 300, 300),
        NormBox(400, 400, 500, 500),
    ]
    triplets = [
        make_triplet(f"t{i}", [boxes[i]], path="same.png") for i in range(3)
    ]
    pairs = build_pair_set(triplets)
    assert len(pairs) == 3
    assert [(a.id, b.id) for a, b in pairs] == [
        ("t0", "t1"),
        ("t0", "t2"),
        ("t1", "t2"),
    ]


def test_build_pair_set_single_triplet_and_shared_box() -> None:
    shared = NormBox(0, 0, 100, 100)
    solo = [make_triplet("only", [shared])]
    assert build_pair_set(solo) == []
    overlapping = [
        make_triplet("x1", [shared, NormBox(300, 300, 400, 400)], path="a.png"),
        make_triplet("x2", [shared], path="a.png"),
    ]
    assert build_pair_set(overlapping) == []


def test_build_pair_set_requires_same_image() -> None:
    triplets = [
        make_triplet("i1", [NormBox(0, 0, 100, 100)], path="a.png"),
        make_triplet("i2", [NormBox(200, 200, 300, 300)], path="b.png"),
    ]
    assert build_pair_set(triplets) == []
