"""Request/response models for the HTTP services."""

from __future__ import annotations

from typing import Any, Optional, Union

from pydantic import BaseModel, Field

from ..services import DEFAULT_BOX_THRESHOLD, DEFAULT_TEXT_THRESHOLD


class InpaintBody(BaseModel):
    image: str = Field(description="base64-encoded PNG crop")
    prompt: str
    crop_side: int = 0


class InpaintReply(BaseModel):
    image: str = Field(description="base64-encoded PNG, same size as the request")


class DetectBody(BaseModel):
    image: str = Field(description="base64-encoded PNG crop")
    prompt: str
    box_threshold: float = DEFAULT_BOX_THRESHOLD
    text_threshold: float = DEFAULT_TEXT_THRESHOLD


class DetectionItem(BaseModel):
    bbox: list[float]
    label: str
    score: float


class DetectReply(BaseModel):
    detections: list[DetectionItem]


class FlaggedItem(BaseModel):
    annotation_id: Union[int, str]
    image_id: Union[int, str]
    prompt: Optional[str] = None
    audit_state: str
    top_label: Optional[str] = None
    top_score: Optional[float] = None


class FlaggedPage(BaseModel):
    items: list[FlaggedItem]
    total: int
    page: int
    size: int


class DecisionBody(BaseModel):
    annotation_id: Union[int, str]
    verdict: str
    new_class: Optional[str] = None
    reviewer: str = "anonymous"


class DecisionReply(BaseModel):
    annotation_id: Union[int, str]
    category: str
    provenance: str
    audit_state: str


class ExportBody(BaseModel):
    out: str


class ExportReply(BaseModel):
    path: str
    annotations: int
    resolved: int
    decisions: int


class ItemDetail(BaseModel):
    annotation_id: Union[int, str]
    image_id: Union[int, str]
    bbox: list[float]
    category: str
    provenance: str
    audit_state: str
    prompt: Optional[str] = None
    image: dict[str, Any]
    evidence: Optional[dict[str, Any]] = None
    original: Optional[dict[str, Any]] = None
    last_decision: Optional[dict[str, Any]] = None
    id_classes: list[str]
