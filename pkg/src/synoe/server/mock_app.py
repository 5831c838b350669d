"""Mock model services behind the real wire protocol.

Lets every other component run against HTTP endpoints without GPUs:
the app wraps the deterministic mock inpainter/detector, optionally
answering scripted detections for chosen prompts from a fixture file
({"detect": {"<prompt>": [{"bbox": [...], "label": "...", "score": ...}]}}).
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Optional

from fastapi import FastAPI

from ..services import (
    MockDetector,
    MockInpainter,
    decode_png,
    encode_png,
    record_from_dict,
    record_to_dict,
)
from .schemas import DetectBody, DetectReply, DetectionItem, InpaintBody, InpaintReply


def load_fixtures(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def create_mock_app(
    seed: int = 0,
    noop_rate: float = 0.0,
    erase_rate: float = 0.0,
    fixtures: Optional[Mapping[str, Any]] = None,
) -> FastAPI:
    app = FastAPI(title="synoe mock model services")
    inpainter = MockInpainter(seed=seed, noop_rate=noop_rate, erase_rate=erase_rate)
    scripted = {
        prompt: [record_from_dict(r) for r in records]
        for prompt, records in ((fixtures or {}).get("detect") or {}).items()
    }

    @app.get("/healthz")
    def healthz() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/v1/inpaint", response_model=InpaintReply)
    def inpaint(body: InpaintBody) -> InpaintReply:
        out = inpainter.inpaint(decode_png(body.image), body.prompt, body.crop_side)
        return InpaintReply(image=encode_png(out))

    @app.post("/v1/detect", response_model=DetectReply)
    def detect(body: DetectBody) -> DetectReply:
        if body.prompt in scripted:
            records = sorted(scripted[body.prompt], key=lambda r: -r.score)
        else:
            detector = MockDetector(
                box_threshold=body.box_threshold, text_threshold=body.text_threshold, seed=seed
            )
            records = detector.detect(decode_png(body.image), body.prompt)
        return DetectReply(detections=[DetectionItem(**record_to_dict(r)) for r in records])

    return app
