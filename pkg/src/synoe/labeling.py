"""Label assignment for inpainted regions.

After a crop is redrawn, detector queries decide what the region now
contains. Three outcomes are possible, each mapping to an annotation edit:

- refined_ood: the prompted object is visible; a new outlier-class
  annotation gets the detector's box (tightened to the actual object,
  since the prompted object rarely fills the replaced one's silhouette).
- id_retained: the original object survived inpainting (common for large
  targets); the original label and box are kept.
- removed: nothing usable is visible; the original annotation is dropped
  rather than kept as a label for pixels that no longer show the object.

For replacement targets the retention query runs first: a surviving
original object must win over a speculative outlier box drawn on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

from .geometry import Anchor, CropRegion, iou
from .model import Annotation, BBox, CategoryRegistry, ImageRecord
from .services import PROMPT_SEPARATOR, DetectionRecord, Detector

# Mapped boxes smaller than this are detector noise, not objects.
MIN_REFINED_AREA = 4.0

STAGE_RETENTION = "retention"
STAGE_REFINE = "refine"


class Scenario(str, Enum):
    REFINED_OOD = "refined_ood"
    ID_RETAINED = "id_retained"
    REMOVED = "removed"


@dataclass(frozen=True)
class EvidenceItem:
    record: DetectionRecord
    stage: str


@dataclass(frozen=True)
class LabelDecision:
    scenario: Scenario
    final_bbox: Optional[BBox]
    final_category: Optional[int]
    evidence: tuple[EvidenceItem, ...]
    prompt: str


def _map_to_image(local: BBox, crop: CropRegion, image: ImageRecord) -> Optional[BBox]:
    """Crop-local box -> image coordinates, clamped to the crop window.

    Detector output is only trusted inside the pixels it was shown. Returns
    None when the clamped box degenerates below the minimum area.
    """
    left, top, right, bottom = crop.pixel_box()
    x1 = max(local.x + left, float(left), 0.0)
    y1 = max(local.y + top, float(top), 0.0)
    x2 = min(local.x2 + left, float(right), float(image.width))
    y2 = min(local.y2 + top, float(bottom), float(image.height))
    w = x2 - x1
    h = y2 - y1
    if w <= 0 or h <= 0 or w * h < MIN_REFINED_AREA:
        return None
    return BBox(x1, y1, w, h)


def refine_ood_box(
    crop: CropRegion,
    inpainted_crop: bytes,
    prompt: str,
    detector: Detector,
    image: ImageRecord,
    registry: CategoryRegistry,
    original_bbox: Optional[BBox] = None,
) -> tuple[Optional[LabelDecision], list[DetectionRecord]]:
    """Query the inpainted crop for the prompted object and tighten the box.

    The highest-score detection wins; exact score ties prefer the candidate
    closest to the replaced object (IoU with `original_bbox`) or, for road
    placements, the largest one. Returns (decision, records); decision is
    None when nothing usable was detected.
    """
    records = detector.detect(inpainted_crop, prompt)
    if not records:
        return None, records

    top_score = records[0].score
    candidates = [r for r in records if r.score == top_score]
    if original_bbox is not None:
        left, top, _, _ = crop.pixel_box()

        def closeness(rec: DetectionRecord) -> float:
            shifted = BBox(rec.bbox.x + left, rec.bbox.y + top, rec.bbox.w, rec.bbox.h)
            return iou(shifted, original_bbox)

        best = max(candidates, key=closeness)
    else:
        best = max(candidates, key=lambda r: r.bbox.area())

    mapped = _map_to_image(best.bbox, crop, image)
    if mapped is None:
        return None, records
    decision = LabelDecision(
        scenario=Scenario.REFINED_OOD,
        final_bbox=mapped,
        final_category=registry.ood_index,
        evidence=tuple(EvidenceItem(r, STAGE_REFINE) for r in records),
        prompt=prompt,
    )
    return decision, records


def check_id_retention(
    inpainted_crop: bytes,
    original_bbox: BBox,
    original_label: str,
    prompt: str,
    detector: Detector,
    registry: CategoryRegistry,
) -> tuple[Optional[LabelDecision], list[DetectionRecord]]:
    """Ask whether the original object is still the dominant content.

    The query names both the prompted object and the original class
    ("penguin . car"); if the top answer is any in-distribution class the
    original annotation is kept verbatim. Returns (decision, records);
    decision is None when retention is not established.
    """
    combined = f"{prompt}{PROMPT_SEPARATOR}{original_label}"
    records = detector.detect(inpainted_crop, combined)
    if not records:
        return None, records
    top = records[0]
    if not registry.is_id_class(top.label):
        return None, records
    category = registry.index_of(original_label)
    if category is None or category == registry.ood_index:
        return None, records
    decision = LabelDecision(
        scenario=Scenario.ID_RETAINED,
        final_bbox=original_bbox,
        final_category=category,
        evidence=tuple(EvidenceItem(r, STAGE_RETENTION) for r in records),
        prompt=prompt,
    )
    return decision, records


def decide(
    crop: CropRegion,
    inpainted_crop: bytes,
    original: Optional[Annotation],
    prompt: str,
    detector: Detector,
    policy: Any,
    image: ImageRecord,
    registry: CategoryRegistry,
) -> LabelDecision:
    """Run the full decision procedure for one inpainted region.

    `policy.keep_partial_id` governs retention outcomes: when False a
    surviving original object leads to removal instead of a retained label
    (variants that tolerate no partially replaced objects).
    """
    evidence: list[EvidenceItem] = []

    if original is not None and crop.anchor is Anchor.REPLACED_ID_OBJECT:
        original_label = registry.name_of(original.category_index)
        retained, records = check_id_retention(
            inpainted_crop, original.bbox, original_label, prompt, detector, registry
        )
        evidence.extend(EvidenceItem(r, STAGE_RETENTION) for r in records)
        if retained is not None:
            if getattr(policy, "keep_partial_id", True):
                return LabelDecision(
                    scenario=Scenario.ID_RETAINED,
                    final_bbox=original.bbox,
                    final_category=original.category_index,
                    evidence=tuple(evidence),
                    prompt=prompt,
                )
            return LabelDecision(
                scenario=Scenario.REMOVED,
                final_bbox=None,
                final_category=None,
                evidence=tuple(evidence),
                prompt=prompt,
            )

    refined, records = refine_ood_box(
        crop,
        inpainted_crop,
        prompt,
        detector,
        image,
        registry,
        original_bbox=original.bbox if original is not None else None,
    )
    evidence.extend(EvidenceItem(r, STAGE_REFINE) for r in records)
    if refined is not None:
        return LabelDecision(
            scenario=Scenario.REFINED_OOD,
            final_bbox=refined.final_bbox,
            final_category=refined.final_category,
            evidence=tuple(evidence),
            prompt=prompt,
        )
    return LabelDecision(
        scenario=Scenario.REMOVED,
        final_bbox=None,
        final_category=None,
        evidence=tuple(evidence),
        prompt=prompt,
    )
