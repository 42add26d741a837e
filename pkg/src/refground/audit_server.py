"""HTTP facade for audit sessions.

Thin adapter over AuditSession: the session object owns all voting
rules and locking; handlers translate to HTTP statuses.  Annotators
identify themselves with an X-Annotator header (or ?annotator= query
parameter); unknown names get 401 rather than implicit registration.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from refground.audit import AuditSession, audit_report, export_verified, vote
from refground.core import ReferringTriplet
from refground.overlay import render_overlay

IMAGE_VARIANTS = ("original", "overlay")


class VotePayload(BaseModel):
    triplet_id: str
    verdict: str
    comment: str = ""


def _triplet_json(triplet: ReferringTriplet) -> dict[str, object]:
    return {
        "id": triplet.id,
        "dataset": triplet.image.dataset,
        "modality": triplet.image.modality,
        "width": triplet.image.width,
        "height": triplet.image.height,
        "query": triplet.query,
        "boxes": [box.as_list() for box in triplet.answer_boxes],
        "image_url": f"/api/image/{triplet.id}?variant=original",
        "overlay_url": f"/api/image/{triplet.id}?variant=overlay",
    }


def create_app(
    session: AuditSession,
    image_root: Path,
    static_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="audit service")
    by_id = {t.id: t for t in session.triplets}

    def resolve_annotator(request: Request, annotator: str | None) -> str:
        name = annotator or request.headers.get("X-Annotator")
        if name is None or name not in session.annotators:
            raise HTTPException(status_code=401, detail="unknown annotator")
        return name

    @app.get("/api/next")
    def next_item(request: Request, annotator: str | None = Query(default=None)):
        name = resolve_annotator(request, annotator)
        triplet = session.next_item(name)
        total = len(session.triplets)
        if triplet is None:
            return {"done": True, "item": None, "total": total}
        return {"done": False, "item": _triplet_json(triplet), "total": total}

    @app.post("/api/vote")
    def submit_vote(
        payload: VotePayload, request: Request, annotator: str | None = Query(default=None)
    ):
        name = resolve_annotator(request, annotator)
        if payload.triplet_id not in by_id:
            raise HTTPException(status_code=404, detail="unknown triplet")
        try:
            decision = session.submit_vote(
                vote(payload.triplet_id, name, payload.verdict, payload.comment)
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return {
            "triplet_id": decision.triplet_id,
            "good_votes": decision.good_votes,
            "total_votes": decision.total_votes,
            "accepted": decision.accepted,
            "pending": decision.pending,
        }

    @app.get("/api/report")
    def report():
        result = audit_report(session)
        return {
            "partial": result.partial,
            "rows": [
                {
                    "dataset": row.dataset,
                    "total": row.total,
                    "good3": row.good3,
                    "good2": row.good2,
                    "good1": row.good1,
                    "good0": row.good0,
                    "good_ratio_pct": row.ratio,
                }
                for row in result.rows
            ],
        }

    @app.get("/api/image/{triplet_id}")
    def image(triplet_id: str, variant: str = Query(default="original")):
        triplet = by_id.get(triplet_id)
        if triplet is None:
            raise HTTPException(status_code=404, detail="unknown triplet")
        if variant not in IMAGE_VARIANTS:
            raise HTTPException(status_code=400, detail="unknown variant")
        path = image_root / triplet.image.path
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image file missing")
        data = path.read_bytes()
        if variant == "overlay":
            data = render_overlay(data, triplet.answer_boxes)
        return Response(content=data, media_type="image/png")

    @app.get("/api/export")
    def export():
        try:
            body = export_verified(session)
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return PlainTextResponse(content=body, media_type="application/x-ndjson")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
