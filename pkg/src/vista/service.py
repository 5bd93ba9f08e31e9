"""HTTP review service for the human-in-the-loop workflow.

Serves pending drafts with their frame/gaze assets, accepts edits and
approvals, and collects Likert ratings; every mutation goes through the
single-writer store. Validation is the caption parser itself, so the service
and the schema can never disagree.
"""

from __future__ import annotations

import io
import os
import threading
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import Depends, FastAPI, HTTPException, Query, Request, Response
from pydantic import BaseModel, Field

from .captions import caption_warnings, parse_caption
from .errors import (
    InvalidArgumentError,
    InvalidTransition,
    ProvenanceOrderError,
    RangeError,
    SentenceCountError,
)
from .heatmap import load_heatmap_grid
from .store import SampleRecord, Store

ENV_TOKEN = "VISTA_REVIEW_TOKEN"

ASSET_SLOTS = ("rgb_t", "gaze_t", "rgb_t1", "gaze_t1")
STATUSES = ("pending", "in_review", "refined", "approved")
DEFAULT_PAGE_SIZE = 20
MAX_PAGE_SIZE = 100
OVERLAY_ALPHA = 0.4


class EditBody(BaseModel):
    actor_id: str = Field(min_length=1)
    text: str


class ActorBody(BaseModel):
    actor_id: str = Field(min_length=1)


class RatingBody(BaseModel):
    evaluator_id: str = Field(min_length=1)
    quality: int
    informativeness: int
    correctness: int


def task_status(store: Store, rec: SampleRecord) -> str:
    if rec.approved:
        return "approved"
    if rec.caption_refined is not None:
        return "refined"
    if store.active_claim(rec.sample_id):
        return "in_review"
    return "pending"


def _task_view(store: Store, rec: SampleRecord) -> dict:
    status = task_status(store, rec)
    claim = store.active_claim(rec.sample_id)
    current = rec.caption_refined or rec.caption_draft
    notes = caption_warnings(current) if current else []
    return {
        "sample_id": rec.sample_id,
        "status": status,
        "assigned_to": claim["actor"] if claim else None,
        "split": rec.split,
        "kl_score": rec.pair.kl_score,
        "draft_text": rec.caption_draft.raw_text if rec.caption_draft else None,
        "current_text": current.raw_text if current else None,
        "sentences": list(current.sentences) if current else None,
        "warnings": notes,
        "asset_urls": {
            slot: f"/tasks/{rec.sample_id}/assets/{slot}" for slot in ASSET_SLOTS
        },
        "ratings": [
            {
                "evaluator_id": r.evaluator_id,
                "quality": r.quality,
                "informativeness": r.informativeness,
                "correctness": r.correctness,
            }
            for r in rec.ratings
        ],
        "history_len": len(store.edit_history(rec.sample_id)),
    }


def _colormap(values: np.ndarray) -> np.ndarray:
    """Blue-to-red heat ramp over [0, 1] -> uint8 RGB."""
    v = np.clip(values, 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0, 1)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0, 1)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0, 1)
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def render_overlay(rgb_path: str, gaze_path: str) -> bytes:
    """RGB frame blended with the gaze heatmap ramp at 40% opacity."""
    from PIL import Image

    with Image.open(rgb_path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    grid = load_heatmap_grid(gaze_path)
    grid = grid / grid.max() if grid.max() > 0 else grid
    heat = Image.fromarray((grid * 255).astype(np.uint8), mode="L").resize(
        (rgb.shape[1], rgb.shape[0])
    )
    colored = _colormap(np.asarray(heat, dtype=np.float64) / 255.0)
    blended = ((1 - OVERLAY_ALPHA) * rgb + OVERLAY_ALPHA * colored).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(blended, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def create_app(store: Store, token: Optional[str] = None,
               allow_any_split_ratings: bool = False) -> FastAPI:
    app = FastAPI(title="vista review service")
    expected_token = token if token is not None else os.environ.get(ENV_TOKEN, "")
    write_lock = threading.Lock()

    async def check_auth(request: Request):
        if not expected_token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    def get_record(sample_id: str) -> SampleRecord:
        rec = store.records.get(sample_id)
        if rec is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id}")
        return rec

    @app.get("/tasks", dependencies=[Depends(check_auth)])
    def list_tasks(status: Optional[str] = Query(default=None),
                   page: int = Query(default=1, ge=1),
                   page_size: int = Query(default=DEFAULT_PAGE_SIZE, ge=1, le=MAX_PAGE_SIZE)):
        if status is not None and status not in STATUSES:
            raise HTTPException(status_code=400, detail=f"invalid status filter {status!r}")
        tasks = [
            _task_view(store, rec)
            for rec in store.records.values()
            if rec.caption_draft is not None or rec.caption_refined is not None
        ]
        if status is not None:
            tasks = [t for t in tasks if t["status"] == status]
        tasks.sort(key=lambda t: (STATUSES.index(t["status"]), t["sample_id"]))
        total = len(tasks)
        pages = max(1, -(-total // page_size))
        start = (page - 1) * page_size
        return {
            "tasks": tasks[start : start + page_size],
            "page": page,
            "pages": pages,
            "total": total,
        }

    @app.get("/tasks/{sample_id}", dependencies=[Depends(check_auth)])
    def get_task(sample_id: str):
        return _task_view(store, get_record(sample_id))

    @app.get("/tasks/{sample_id}/assets/{slot}", dependencies=[Depends(check_auth)])
    def get_asset(sample_id: str, slot: str):
        rec = get_record(sample_id)
        if slot not in ASSET_SLOTS:
            raise HTTPException(status_code=400, detail=f"unknown asset slot {slot!r}")
        pair = rec.pair
        if slot == "rgb_t" or slot == "rgb_t1":
            path = pair.rgb_t if slot == "rgb_t" else pair.rgb_t1
            if not Path(path).is_file():
                raise HTTPException(status_code=404, detail=f"asset file missing: {path}")
            from PIL import Image

            buf = io.BytesIO()
            with Image.open(path) as img:
                img.convert("RGB").save(buf, format="PNG")
            data = buf.getvalue()
        else:
            rgb = pair.rgb_t if slot == "gaze_t" else pair.rgb_t1
            gaze = pair.gaze_t if slot == "gaze_t" else pair.gaze_t1
            if not (Path(rgb).is_file() and Path(gaze).is_file()):
                raise HTTPException(status_code=404, detail="asset file missing")
            data = render_overlay(rgb, gaze)
        return Response(content=data, media_type="image/png")

    @app.post("/tasks/{sample_id}/claim", dependencies=[Depends(check_auth)])
    def claim_task(sample_id: str, body: ActorBody):
        rec = get_record(sample_id)
        with write_lock:
            try:
                store.claim(sample_id, body.actor_id)
            except InvalidTransition as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return _task_view(store, rec)

    @app.post("/tasks/{sample_id}/edit", dependencies=[Depends(check_auth)])
    def submit_edit(sample_id: str, body: EditBody):
        rec = get_record(sample_id)
        status = task_status(store, rec)
        if status not in ("pending", "in_review"):
            raise HTTPException(
                status_code=409,
                detail=f"task is {status}; edits are accepted in pending or in_review",
            )
        claim = store.active_claim(sample_id)
        if claim and claim["actor"] != body.actor_id:
            raise HTTPException(
                status_code=409,
                detail=f"claimed by {claim['actor']}; wait for the claim to expire",
            )
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                caption = parse_caption(body.text, sample_id=sample_id, provenance="refined")
        except SentenceCountError as exc:
            raise HTTPException(
                status_code=422,
                detail={"code": "sentence_count", "found_n": exc.found_n, "message": str(exc)},
            )
        with write_lock:
            if not claim:
                store.claim(sample_id, body.actor_id)
            try:
                store.transition_provenance(sample_id, caption, body.actor_id)
            except (ProvenanceOrderError, InvalidTransition) as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return _task_view(store, rec)

    @app.post("/tasks/{sample_id}/approve", dependencies=[Depends(check_auth)])
    def approve_task(sample_id: str, body: ActorBody):
        rec = get_record(sample_id)
        with write_lock:
            try:
                store.approve(sample_id, body.actor_id)
            except InvalidTransition as exc:
                raise HTTPException(status_code=409, detail=str(exc))
        return _task_view(store, rec)

    @app.post("/tasks/{sample_id}/rating", dependencies=[Depends(check_auth)])
    def submit_rating(sample_id: str, body: RatingBody):
        rec = get_record(sample_id)
        with write_lock:
            try:
                store.submit_rating(
                    sample_id, body.evaluator_id, body.quality, body.informativeness,
                    body.correctness, allow_any_split=allow_any_split_ratings,
                )
            except RangeError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            except InvalidArgumentError as exc:
                raise HTTPException(status_code=403, detail=str(exc))
        values = [v for r in rec.ratings for v in r.values]
        return {
            "task": _task_view(store, rec),
            "human_score": sum(values) / len(values) if values else None,
        }

    @app.get("/export/refined", dependencies=[Depends(check_auth)])
    def export_refined():
        rows = []
        for rec in store.records.values():
            if rec.approved:
                rows.append(
                    {
                        "sample_id": rec.sample_id,
                        "image": rec.pair.rgb_t,
                        "caption": rec.caption_refined.raw_text,
                    }
                )
        return {"records": rows}

    return app


def serve(store: Store, host: str = "127.0.0.1", port: int = 8350,
          token: Optional[str] = None, allow_any_split_ratings: bool = False) -> None:
    import uvicorn

    app = create_app(store, token=token, allow_any_split_ratings=allow_any_split_ratings)
    uvicorn.run(app, host=host, port=port, log_level="warning")
