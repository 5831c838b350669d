"""Automatic quality audit for synthetic outlier annotations.

Every outlier annotation produced by the pipeline carries detector
evidence. The audit replays a simple agreement check offline: the top
evidence label should describe the prompted object. Agreement confirms
the annotation; disagreement flags it ambiguous for human review, with a
special tally when the detector instead named an in-distribution class
(those are the dangerous ones: a mislabeled real object, not just a
badly drawn synthetic one).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ParseError, SchemaError
from .model import Annotation, AuditState, DatasetManifest, Provenance

logger = logging.getLogger(__name__)


@dataclass
class AuditReport:
    total: int = 0
    matched: int = 0
    ambiguous: int = 0
    mislabeled_as_id: int = 0
    missing_evidence: int = 0
    mislabeled_histogram: dict[str, int] = field(default_factory=dict)
    flagged_ids: list[Any] = field(default_factory=list)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "matched": self.matched,
            "ambiguous": self.ambiguous,
            "mislabeled_as_id": self.mislabeled_as_id,
            "missing_evidence": self.missing_evidence,
            "mislabeled_histogram": dict(sorted(self.mislabeled_histogram.items())),
            "flagged_ids": self.flagged_ids,
        }


def load_evidence(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: evidence must be a JSON object keyed by annotation id")
    return raw


def label_matches_prompt(label: str, prompt: str) -> bool:
    """A predicted label agrees with the prompt when every prompt token
    appears among the label tokens (case-insensitive). Grounding-style
    detectors echo prompt fragments, so substring-ish matching is the
    right strictness: "crate small" vs "crate" must NOT pass."""
    label_tokens = set(label.lower().split())
    return all(tok in label_tokens for tok in prompt.lower().split())


def _top_detection(payload: Mapping[str, Any]) -> Mapping[str, Any] | None:
    detections = payload.get("detections") or []
    best = None
    for det in detections:
        if best is None or float(det["score"]) > float(best["score"]):
            best = det
    return best


def audit_manifest(
    manifest: DatasetManifest,
    evidence: Mapping[str, Any],
) -> tuple[DatasetManifest, AuditReport]:
    """Audit every outlier annotation; returns the re-stated manifest and
    the tallies.

    Counting identity: matched + ambiguous == total. Human-resolved
    annotations count as matched and are never reopened, so re-auditing an
    exported post-review manifest yields zero ambiguous. The audit is
    idempotent: states are recomputed from evidence, not accumulated.
    """
    report = AuditReport()
    out_annotations: list[Annotation] = []

    for ann in manifest.annotations:
        if ann.provenance is not Provenance.INPAINTED_OOD:
            out_annotations.append(ann)
            continue

        report.total += 1
        if ann.audit_state is AuditState.HUMAN_RESOLVED:
            report.matched += 1
            out_annotations.append(ann)
            continue

        payload = evidence.get(str(ann.id))
        top = _top_detection(payload) if payload else None
        if payload is None or top is None:
            report.ambiguous += 1
            report.missing_evidence += 1
            report.flagged_ids.append(ann.id)
            out_annotations.append(replace(ann, audit_state=AuditState.AMBIGUOUS))
            continue

        prompt = ann.prompt_used or str(payload.get("prompt") or "")
        label = str(top["label"])
        if label_matches_prompt(label, prompt):
            report.matched += 1
            out_annotations.append(replace(ann, audit_state=AuditState.CONFIRMED))
        else:
            report.ambiguous += 1
            report.flagged_ids.append(ann.id)
            if manifest.registry.is_id_class(label):
                report.mislabeled_as_id += 1
                name = manifest.registry.name_of(manifest.registry.index_of(label))
                report.mislabeled_histogram[name] = report.mislabeled_histogram.get(name, 0) + 1
            out_annotations.append(replace(ann, audit_state=AuditState.AMBIGUOUS))

    audited = replace(manifest, annotations=tuple(out_annotations))
    logger.info(
        "audit: %d outlier annotations, %d matched, %d ambiguous (%d mislabeled as ID, %d missing evidence)",
        report.total,
        report.matched,
        report.ambiguous,
        report.mislabeled_as_id,
        report.missing_evidence,
    )
    return audited, report
