"""Stage drivers connecting manifest, pools, drafts, triplets, reports.

Stages communicate only through files under the output directory, so
any stage can be rerun in isolation.  With the mock backend and a
fixed seed every artifact is byte-identical across runs; timestamps
appear only in transcript logs, never in artifacts.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

from PIL import Image

from refground.backend import (
    Backend,
    GenerationRequest,
    LiveBackend,
    MockBackend,
)
from refground.config import PipelineConfig
from refground.core import MODALITIES, serialize_triplet
from refground.masks import (
    MASK_MODES,
    decode_mask,
    derive_boxes,
    parse_pool,
    serialize_pool,
)
from refground.analytics import (
    load_default_gazetteer,
    render_metrics_csv,
    split_statistics,
    split_stats_json,
)
from refground.core import ImageRef, ReferringTriplet, parse_triplet
from refground.evaluation import (
    EvalConfig,
    build_pair_set,
    evaluate_split,
    prediction_record,
    render_eval_csv,
    render_ss_csv,
    score_records,
)
from refground.synthesis import (
    DraftRecord,
    build_prompt,
    load_profiles,
    parse_draft,
    select_targets,
    serialize_draft,
)
from refground.verification import (
    load_default_lexicons,
    pass_rate_report,
    render_ledger_csv,
    run_verification,
)

POOLS_FILE = "pools.jsonl"
DRAFTS_FILE = "drafts.jsonl"
TRIPLETS_FILE = "triplets.jsonl"
LEDGER_FILE = "ledger.csv"
REJECTIONS_FILE = "rejections.jsonl"
METRICS_FILE = "metrics.csv"
METRICS_JSON_FILE = "metrics.json"
EVAL_FILE = "eval.csv"
SS_FILE = "ss.csv"
EXTRACT_ERRORS_FILE = "errors_extract.jsonl"

MANIFEST_REQUIRED = ("dataset", "modality", "image", "mask", "mask_mode")
MANIFEST_OPTIONAL = ("category", "split")


def read_manifest(path: Path) -> list[dict[str, Any]]:
    if not path.is_file():
        raise ValueError(f"manifest not found: {path}")
    entries: list[dict[str, Any]] = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        if not isinstance(record, dict):
            raise ValueError(f"manifest line {number}: not an object")
        missing = [key for key in MANIFEST_REQUIRED if key not in record]
        if missing:
            raise ValueError(f"manifest line {number}: missing key {missing[0]!r}")
        unknown = sorted(set(record) - set(MANIFEST_REQUIRED) - set(MANIFEST_OPTIONAL))
        if unknown:
            raise ValueError(f"manifest line {number}: unknown key {unknown[0]!r}")
        if record["modality"] not in MODALITIES:
            raise ValueError(
                f"manifest line {number}: unknown modality {record['modality']!r}"
            )
        if record["mask_mode"] not in MASK_MODES:
            raise ValueError(
                f"manifest line {number}: unknown mask_mode {record['mask_mode']!r}"
            )
        record.setdefault("split", "train")
        entries.append(record)
    return entries


def make_backend(config: PipelineConfig) -> Backend:
    if config.backend == "live":
        assert config.backend_config is not None
        return LiveBackend(config.backend_config)
    return MockBackend(
        corruption_rate=config.corruption_rate,
        mismatch_rate=config.mismatch_rate,
        ambiguous_rate=config.ambiguous_rate,
        lexicon_dir=config.lexicon_dir,
    )


def sample_seed(global_seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{global_seed}|{sample_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for line in lines:
            handle.write(line + "\n")


def run_extract(config: PipelineConfig) -> dict[str, Any]:
    """Manifest rows to candidate pools; per-record failures are logged."""
    entries = read_manifest(config.manifest)
    root = config.manifest.parent
    config.out_dir.mkdir(parents=True, exist_ok=True)
    pool_lines: list[str] = []
    errors: list[str] = []
    for entry in entries:
        try:
            with Image.open(root / entry["image"]) as handle:
                width, height = handle.size
            mask = decode_mask((root / entry["mask"]).read_bytes(), entry["mask_mode"])
            ref = ImageRef(
                dataset=entry["dataset"],
                path=entry["image"],
                width=width,
                height=height,
                modality=entry["modality"],
            )
            pool = derive_boxes(
                mask,
                ref,
                connectivity=config.connectivity,
                min_component_pixels=config.min_component_pixels,
            )
        except (ValueError, OSError) as exc:
            errors.append(
                json.dumps(
                    {"image": entry["image"], "error": str(exc)},
                    separators=(",", ":"),
                    ensure_ascii=False,
                )
            )
            continue
        pool_lines.append(serialize_pool(pool, entry["split"]))
    _write_lines(config.out_dir / POOLS_FILE, pool_lines)
    if errors:
        _write_lines(config.out_dir / EXTRACT_ERRORS_FILE, errors)
    return {
        "command": "extract",
        "images": len(entries),
        "pools": len(pool_lines),
        "errors": len(errors),
    }


def run_synthesize(config: PipelineConfig) -> dict[str, Any]:
    """Candidate pools to raw drafted queries via the backend."""
    pools_path = config.out_dir / POOLS_FILE
    if not pools_path.is_file():
        raise ValueError(f"pools file not found: {pools_path} (run extract first)")
    backend = make_backend(config)
    profiles = load_profiles(config.lexicon_dir)
    root = config.manifest.parent
    generator = (
        config.backend_config.model if config.backend == "live" else "mock"
    )
    draft_lines: list[str] = []
    count = 0
    for line in pools_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        pool, split = parse_pool(line)
        stem = Path(pool.image.path).stem
        image_bytes = None
        if config.backend == "live":
            image_bytes = (root / pool.image.path).read_bytes()
        for q in range(config.queries_per_image):
            sample_id = f"{pool.image.dataset}_{stem}_q{q}"
            targets = select_targets(
                pool, seed=sample_seed(config.seed, sample_id), max_targets=config.max_targets
            )
            bundle = build_prompt(
                pool.image, pool, targets, profiles[pool.image.modality]
            )
            raw = backend.generate(
                GenerationRequest(
                    sample_id=sample_id,
                    bundle=bundle,
                    pool=pool,
                    target_indices=targets,
                    image_bytes=image_bytes,
                )
            )
            draft_lines.append(
                serialize_draft(
                    DraftRecord(
                        id=sample_id,
                        pool=pool,
                        split=split,
                        target_indices=targets,
                        raw_response=raw,
                        generator=generator,
                    )
                )
            )
            count += 1
    _write_lines(config.out_dir / DRAFTS_FILE, draft_lines)
    return {"command": "synthesize", "drafts": count, "backend": config.backend}


def run_verify(config: PipelineConfig) -> dict[str, Any]:
    """Drafts through the stage prefix; writes triplets, ledger, rejections."""
    drafts_path = config.out_dir / DRAFTS_FILE
    if not drafts_path.is_file():
        raise ValueError(f"drafts file not found: {drafts_path} (run synthesize first)")
    drafts = [
        parse_draft(line)
        for line in drafts_path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    backend = make_backend(config)
    lexicons = load_default_lexicons(config.lexicon_dir)
    profiles = load_profiles(config.lexicon_dir)
    root = config.manifest.parent

    def load_image(draft: DraftRecord) -> bytes:
        return (root / draft.pool.image.path).read_bytes()

    result = run_verification(
        drafts,
        backend=backend,
        lexicons=lexicons,
        profiles=profiles,
        image_loader=load_image,
        enabled_stages=config.stages,
        concurrency=config.concurrency,
    )
    _write_lines(
        config.out_dir / TRIPLETS_FILE,
        [serialize_triplet(t) for t in result.accepted],
    )
    ledger_csv = render_ledger_csv(pass_rate_report(result.ledgers))
    (config.out_dir / LEDGER_FILE).write_text(ledger_csv, encoding="utf-8")
    rejection_lines = []
    for outcome in result.outcomes:
        if outcome.accepted:
            continue
        last = outcome.stages[-1]
        rejection_lines.append(
            json.dumps(
                {
                    "id": outcome.triplet_id,
                    "stage": last.stage,
                    "reason": last.reason,
                    "detail": last.detail,
                },
                separators=(",", ":"),
                ensure_ascii=False,
            )
        )
    _write_lines(config.out_dir / REJECTIONS_FILE, rejection_lines)
    quarantined = sum(1 for o in result.outcomes if o.quarantined)
    return {
        "command": "verify",
        "drafts": len(drafts),
        "accepted": len(result.accepted),
        "rejected": len(rejection_lines) - quarantined,
        "quarantined": quarantined,
    }


def _load_triplets(path: Path) -> list[ReferringTriplet]:
    if not path.is_file():
        raise ValueError(f"triplets file not found: {path} (run verify first)")
    return [
        parse_triplet(line)
        for line in path.read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]


def _split_labels(config: PipelineConfig) -> dict[str, str]:
    """Triplet id to split label, joined from the drafts artifact."""
    drafts_path = config.out_dir / DRAFTS_FILE
    labels: dict[str, str] = {}
    if drafts_path.is_file():
        for line in drafts_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                draft = parse_draft(line)
                labels[draft.id] = draft.split
    return labels


def run_analyze(config: PipelineConfig, split: str | None = None) -> dict[str, Any]:
    """Semantic metrics per (dataset, split) over accepted triplets."""
    triplets = _load_triplets(config.out_dir / TRIPLETS_FILE)
    fallback = split or "train"
    labels = _split_labels(config)
    gazetteer = load_default_gazetteer(config.lexicon_dir)
    by_split: dict[str, list[ReferringTriplet]] = {}
    for triplet in triplets:
        by_split.setdefault(labels.get(triplet.id, fallback), []).append(triplet)
    stats = [
        split_statistics(by_split[name], split=name, gazetteer=gazetteer)
        for name in sorted(by_split)
    ]
    (config.out_dir / METRICS_FILE).write_text(
        render_metrics_csv(stats), encoding="utf-8"
    )
    (config.out_dir / METRICS_JSON_FILE).write_text(
        json.dumps([split_stats_json(s) for s in stats], indent=2, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    return {
        "command": "analyze",
        "triplets": len(triplets),
        "splits": [s.split for s in stats],
    }


def read_predictions(path: Path) -> list:
    if not path.is_file():
        raise ValueError(f"predictions file not found: {path}")
    records = []
    for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        record = json.loads(line)
        if not isinstance(record, dict) or set(record) != {"id", "output"}:
            raise ValueError(
                f"predictions line {number}: expected exactly the keys id, output"
            )
        if not isinstance(record["id"], str) or not isinstance(record["output"], str):
            raise ValueError(f"predictions line {number}: id and output must be strings")
        records.append(prediction_record(record["id"], record["output"]))
    return records


def run_evaluate(config: PipelineConfig, predictions_path: Path) -> dict[str, Any]:
    """Score predictions against accepted triplets; writes eval and SS tables."""
    triplets = _load_triplets(config.out_dir / TRIPLETS_FILE)
    predictions = read_predictions(predictions_path)
    eval_config = EvalConfig(tau=config.tau, policy=config.matching_policy)
    report = evaluate_split(predictions, triplets, eval_config)
    (config.out_dir / EVAL_FILE).write_text(render_eval_csv(report), encoding="utf-8")
    pairs = build_pair_set(triplets)
    scored = score_records(predictions, triplets, eval_config)
    taus = sorted({round(i / 10, 1) for i in range(1, 10)} | {config.tau})
    (config.out_dir / SS_FILE).write_text(
        render_ss_csv(pairs, scored, taus=taus, policy=config.matching_policy),
        encoding="utf-8",
    )
    return {
        "command": "evaluate",
        "predictions": len(predictions),
        "triplets": len(triplets),
        "pairs": len(pairs),
    }
