"""HTTP review service: browse flagged annotations, submit verdicts,
export the corrected manifest."""

from __future__ import annotations

import io
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from ..errors import InvalidClass, InvariantError, UnknownAnnotation
from ..model import BBox
from ..review import ReviewDecision, ReviewStore, Verdict
from .schemas import (
    DecisionBody,
    DecisionReply,
    ExportBody,
    ExportReply,
    FlaggedPage,
    ItemDetail,
)

# Context margin around a box in the zoomed crop pane.
CROP_CONTEXT = 2.5
CROP_MIN_SIDE = 96


def _wants_source(value: str) -> bool:
    if value not in ("edited", "original"):
        raise HTTPException(status_code=400, detail="source must be 'edited' or 'original'")
    return value == "original"


def create_review_app(store: ReviewStore, ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="synoe review service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.get("/review/flagged", response_model=FlaggedPage)
    def flagged(page: int = 1, size: int = 50) -> FlaggedPage:
        try:
            return FlaggedPage(**store.flagged(page=page, size=size))
        except InvariantError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.get("/review/item/{annotation_id}", response_model=ItemDetail)
    def item(annotation_id: Union[int, str]) -> ItemDetail:
        try:
            return ItemDetail(**store.item(annotation_id))
        except UnknownAnnotation as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/review/item/{annotation_id}/image/full")
    def image_full(annotation_id: Union[int, str], source: str = "edited") -> FileResponse:
        try:
            path = store.image_path(annotation_id, source=_wants_source(source))
        except UnknownAnnotation as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not Path(path).exists():
            raise HTTPException(status_code=404, detail=f"image file missing: {path}")
        return FileResponse(path, media_type="image/png")

    @app.get("/review/item/{annotation_id}/image/crop")
    def image_crop(annotation_id: Union[int, str], source: str = "edited") -> Response:
        try:
            detail = store.item(annotation_id)
            path = store.image_path(annotation_id, source=_wants_source(source))
        except UnknownAnnotation as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not Path(path).exists():
            raise HTTPException(status_code=404, detail=f"image file missing: {path}")
        box = BBox.from_list(detail["bbox"])
        side = max(CROP_MIN_SIDE, CROP_CONTEXT * max(box.w, box.h))
        cx, cy = box.center()
        with Image.open(path) as img:
            left = max(0, int(cx - side / 2))
            top = max(0, int(cy - side / 2))
            right = min(img.width, int(cx + side / 2))
            bottom = min(img.height, int(cy + side / 2))
            crop = img.convert("RGB").crop((left, top, right, bottom))
        buf = io.BytesIO()
        crop.save(buf, format="PNG")
        headers = {"X-Crop-Origin": f"{left},{top}"}
        return Response(content=buf.getvalue(), media_type="image/png", headers=headers)

    @app.post("/review/decision", response_model=DecisionReply)
    def decision(body: DecisionBody) -> DecisionReply:
        try:
            verdict = Verdict(body.verdict)
        except ValueError as exc:
            raise HTTPException(
                status_code=400, detail=f"unknown verdict {body.verdict!r}"
            ) from exc
        try:
            updated = store.submit(
                ReviewDecision(
                    annotation_id=body.annotation_id,
                    verdict=verdict,
                    new_class=body.new_class,
                    reviewer=body.reviewer,
                )
            )
        except UnknownAnnotation as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except (InvalidClass, InvariantError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return DecisionReply(
            annotation_id=updated.id,
            category=store.manifest.registry.name_of(updated.category_index),
            provenance=updated.provenance.value,
            audit_state=updated.audit_state.value,
        )

    @app.post("/review/export", response_model=ExportReply)
    def export(body: ExportBody) -> ExportReply:
        try:
            return ExportReply(**store.export(body.out))
        except OSError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
