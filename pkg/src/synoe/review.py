"""Human triage of flagged outlier annotations.

The store serves review items (flagged annotations plus their evidence),
applies verdicts, and persists every decision to an append-only NDJSON
journal. Restarting the service replays the journal against the manifest,
so the journal is the source of truth for human work; later decisions on
the same annotation supersede earlier ones while history is kept.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import InvalidClass, InvariantError, ParseError, UnknownAnnotation
from .model import (
    Annotation,
    AnnotationId,
    AuditState,
    DatasetManifest,
    Provenance,
    save_manifest,
)


class Verdict(str, Enum):
    ACCEPT_OOD = "accept_ood"
    REASSIGN_ID = "reassign_id"
    DISCARD = "discard"


@dataclass(frozen=True)
class ReviewDecision:
    annotation_id: AnnotationId
    verdict: Verdict
    new_class: Optional[str] = None
    reviewer: str = "anonymous"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ReviewStore:
    """Review state for one audited manifest.

    Decisions mutate the in-memory manifest and append to the journal
    under a lock; `export` writes the current manifest. Only annotations
    flagged ambiguous (or previously human-resolved, for supersession)
    accept decisions.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        evidence: Mapping[str, Any] | None = None,
        journal_path: str | Path | None = None,
        base_dir: str | Path = ".",
    ) -> None:
        self._lock = threading.Lock()
        self._manifest = manifest
        self._evidence = dict(evidence or {})
        self._journal_path = Path(journal_path) if journal_path else None
        self._base_dir = Path(base_dir)
        self._history: list[dict[str, Any]] = []
        if self._journal_path and self._journal_path.exists():
            self._replay(self._journal_path)

    @property
    def manifest(self) -> DatasetManifest:
        return self._manifest

    @property
    def history(self) -> list[dict[str, Any]]:
        return list(self._history)

    def _replay(self, path: Path) -> None:
        for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: bad journal line: {exc}") from exc
            decision = ReviewDecision(
                annotation_id=entry["annotation_id"],
                verdict=Verdict(entry["verdict"]),
                new_class=entry.get("new_class"),
                reviewer=entry.get("reviewer", "anonymous"),
            )
            self._apply(decision)
            self._history.append(entry)

    def _find(self, annotation_id: AnnotationId) -> Annotation:
        for ann in self._manifest.annotations:
            if ann.id == annotation_id or str(ann.id) == str(annotation_id):
                return ann
        raise UnknownAnnotation(f"no annotation with id {annotation_id!r}")

    def _apply(self, decision: ReviewDecision) -> Annotation:
        ann = self._find(decision.annotation_id)
        if ann.audit_state not in (AuditState.AMBIGUOUS, AuditState.HUMAN_RESOLVED):
            raise InvariantError(
                f"annotation {ann.id!r} is {ann.audit_state.value}, only flagged or "
                f"previously resolved annotations accept decisions"
            )

        registry = self._manifest.registry
        if decision.verdict is Verdict.ACCEPT_OOD:
            updated = replace(
                ann,
                category_index=registry.ood_index,
                provenance=Provenance.INPAINTED_OOD,
                audit_state=AuditState.HUMAN_RESOLVED,
            )
        elif decision.verdict is Verdict.REASSIGN_ID:
            if not decision.new_class:
                raise InvalidClass("reassign_id requires new_class")
            index = registry.index_of(decision.new_class)
            if index is None or index == registry.ood_index:
                raise InvalidClass(
                    f"{decision.new_class!r} is not an in-distribution class "
                    f"(known: {', '.join(registry.id_classes)})"
                )
            updated = replace(
                ann,
                category_index=index,
                provenance=Provenance.INPAINTED_ID_RETAINED,
                audit_state=AuditState.HUMAN_RESOLVED,
            )
        else:
            updated = replace(
                ann,
                provenance=Provenance.REMOVED,
                audit_state=AuditState.HUMAN_RESOLVED,
            )

        annotations = tuple(updated if a.id == ann.id else a for a in self._manifest.annotations)
        self._manifest = replace(self._manifest, annotations=annotations)
        return updated

    def submit(self, decision: ReviewDecision) -> Annotation:
        """Apply a verdict and append it to the journal atomically."""
        with self._lock:
            updated = self._apply(decision)
            entry = {
                "annotation_id": decision.annotation_id,
                "verdict": decision.verdict.value,
                "new_class": decision.new_class,
                "reviewer": decision.reviewer,
                "timestamp": _utc_now(),
            }
            if self._journal_path:
                self._journal_path.parent.mkdir(parents=True, exist_ok=True)
                with self._journal_path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            self._history.append(entry)
            return updated

    def flagged(self, page: int = 1, size: int = 50) -> dict[str, Any]:
        """Page through annotations awaiting review, in manifest order."""
        if page < 1 or size < 1:
            raise InvariantError(f"page and size must be positive, got page={page} size={size}")
        with self._lock:
            pending = [
                ann
                for ann in self._manifest.annotations
                if ann.provenance is Provenance.INPAINTED_OOD
                and ann.audit_state is AuditState.AMBIGUOUS
            ]
            start = (page - 1) * size
            items = [self._summary(ann) for ann in pending[start : start + size]]
            return {"items": items, "total": len(pending), "page": page, "size": size}

    def _summary(self, ann: Annotation) -> dict[str, Any]:
        payload = self._evidence.get(str(ann.id)) or {}
        top = None
        for det in payload.get("detections") or []:
            if top is None or float(det["score"]) > float(top["score"]):
                top = det
        return {
            "annotation_id": ann.id,
            "image_id": ann.image_id,
            "prompt": ann.prompt_used,
            "audit_state": ann.audit_state.value,
            "top_label": top["label"] if top else None,
            "top_score": top["score"] if top else None,
        }

    def item(self, annotation_id: AnnotationId) -> dict[str, Any]:
        """Full detail for one annotation: box, image, evidence, lineage."""
        with self._lock:
            ann = self._find(annotation_id)
            image = self._manifest.image_by_id(ann.image_id)
            payload = self._evidence.get(str(ann.id))
            original = None
            if payload and payload.get("source_annotation_id") is not None:
                src_id = payload["source_annotation_id"]
                try:
                    src = self._find(src_id)
                    original = {
                        "annotation_id": src.id,
                        "bbox": src.bbox.to_list(),
                        "label": payload.get("original_label"),
                    }
                except UnknownAnnotation:
                    original = {"annotation_id": src_id, "bbox": None, "label": payload.get("original_label")}
            decisions = [h for h in self._history if str(h["annotation_id"]) == str(ann.id)]
            return {
                "annotation_id": ann.id,
                "image_id": ann.image_id,
                "bbox": ann.bbox.to_list(),
                "category": self._manifest.registry.name_of(ann.category_index),
                "provenance": ann.provenance.value,
                "audit_state": ann.audit_state.value,
                "prompt": ann.prompt_used,
                "image": {
                    "width": image.width,
                    "height": image.height,
                    "file_name": image.file_path,
                    "has_source": image.source_path is not None,
                },
                "evidence": payload,
                "original": original,
                "last_decision": decisions[-1] if decisions else None,
                "id_classes": list(self._manifest.registry.id_classes),
            }

    def image_path(self, annotation_id: AnnotationId, source: bool = False) -> Path:
        """Path to the edited render, or with source=True the pre-edit
        image (falls back to the render for untouched images)."""
        with self._lock:
            ann = self._find(annotation_id)
            image = self._manifest.image_by_id(ann.image_id)
            chosen = image.source_path if source and image.source_path else image.file_path
            p = Path(chosen)
            return p if p.is_absolute() else self._base_dir / p

    def export(self, path: str | Path) -> dict[str, Any]:
        """Write the current manifest (with all applied decisions)."""
        with self._lock:
            save_manifest(self._manifest, path)
            resolved = sum(
                1 for a in self._manifest.annotations if a.audit_state is AuditState.HUMAN_RESOLVED
            )
            return {
                "path": str(path),
                "annotations": len(self._manifest.annotations),
                "resolved": resolved,
                "decisions": len(self._history),
            }
