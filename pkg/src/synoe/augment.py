"""Augmentation pipeline: plant synthetic outlier objects into a dataset.

For each selected image the pipeline picks target regions (replacing
existing objects of the replaceable classes, or free road space), sends
each region to the inpainting service with a randomly drawn unusual-object
prompt, and lets the label decision procedure translate what actually got
painted into annotation edits. Edited frames are re-encoded losslessly
next to a new manifest; an evidence file preserves every detector answer
for the downstream audit and review stages.

Determinism: one master seed; every image gets its own hash-derived RNG
stream, so results do not depend on worker scheduling, and re-runs produce
byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from PIL import Image

from .errors import MaskMismatch, ServiceError, TransportError, UnknownVariant
from .geometry import (
    Anchor,
    CropRegion,
    crop_for_target,
    load_road_mask,
    min_distance_ok,
    sample_road_region,
)
from .labeling import LabelDecision, Scenario, decide
from .model import (
    Annotation,
    AuditState,
    BBox,
    DatasetManifest,
    ImageId,
    ImageRecord,
    Provenance,
    save_manifest,
)
from .prompts import PromptCatalog, sample_prompt
from .services import Detector, Inpainter
from . import model

logger = logging.getLogger(__name__)

REPLACEABLE_CLASSES = ("car", "truck", "trailer", "pedestrian")

EVIDENCE_FILE = "evidence.json"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"
IMAGES_DIR = "images"

KIND_REPLACEMENT = "replacement"
KIND_ROAD = "road"


@dataclass(frozen=True)
class VariantPolicy:
    """Knobs that define a dataset variant.

    replace_id_objects: replace existing replaceable-class objects
    lostandfound_prompts: extend the prompt list with lost-cargo classes
    road_placements: insert objects on free road space (needs road masks)
    keep_partial_id: keep the original label when the object survives
        inpainting; when False such objects are removed instead
    """

    name: str
    replace_id_objects: bool = True
    lostandfound_prompts: bool = False
    road_placements: bool = False
    keep_partial_id: bool = True
    ood_image_proportion: float = 1.0
    replaceable_classes: tuple[str, ...] = REPLACEABLE_CLASSES
    per_image_count: tuple[int, int] = (1, 3)
    road_region_side: int = 128


_VARIANT_FLAGS: dict[str, dict[str, bool]] = {
    "V1": {"replace_id_objects": True, "lostandfound_prompts": False, "road_placements": False, "keep_partial_id": True},
    "V2": {"replace_id_objects": True, "lostandfound_prompts": True, "road_placements": False, "keep_partial_id": True},
    "V3": {"replace_id_objects": False, "lostandfound_prompts": False, "road_placements": True, "keep_partial_id": True},
    "V4": {"replace_id_objects": True, "lostandfound_prompts": False, "road_placements": False, "keep_partial_id": False},
    "V5": {"replace_id_objects": True, "lostandfound_prompts": False, "road_placements": True, "keep_partial_id": True},
}


def select_variant(name: str, **overrides: Any) -> VariantPolicy:
    """Policy for a named variant; keyword overrides adjust tunables."""
    if name not in _VARIANT_FLAGS:
        raise UnknownVariant(f"unknown variant {name!r}, expected one of {sorted(_VARIANT_FLAGS)}")
    return VariantPolicy(name=name, **{**_VARIANT_FLAGS[name], **overrides})


def derive_rng(seed: int, *parts: object) -> random.Random:
    """Independent RNG stream for (seed, parts), stable across processes."""
    key = "|".join([str(seed), *(str(p) for p in parts)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def choose_augmented_subset(
    image_ids: Sequence[ImageId],
    proportion: float,
    rng: random.Random,
) -> list[ImageId]:
    """Pick round(proportion * N) images, half-up rounding, preserving
    input order in the result."""
    if not 0.0 <= proportion <= 1.0:
        raise ValueError(f"proportion must be in [0, 1], got {proportion}")
    n = len(image_ids)
    k = math.floor(proportion * n + 0.5)
    chosen = set(rng.sample(range(n), k))
    return [iid for i, iid in enumerate(image_ids) if i in chosen]


@dataclass
class PendingAnnotation:
    """New outlier annotation awaiting a final id at assembly time."""

    bbox: BBox
    category_index: int
    prompt_used: str
    source_annotation_id: Optional[Any]
    evidence: dict[str, Any]


@dataclass
class ImageResult:
    image_id: ImageId
    kept: list[Annotation] = field(default_factory=list)
    new: list[PendingAnnotation] = field(default_factory=list)
    evidence_existing: dict[Any, dict[str, Any]] = field(default_factory=dict)
    edited_file: Optional[str] = None
    kinds: dict[str, int] = field(default_factory=lambda: {KIND_REPLACEMENT: 0, KIND_ROAD: 0})
    refined_ood: int = 0
    id_retained: int = 0
    removed: int = 0
    regions_inpainted: int = 0
    placement_failures: int = 0
    service_errors: int = 0
    error: Optional[str] = None

    def to_report_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "image_id": self.image_id,
            "kinds": dict(self.kinds),
            "refined_ood": self.refined_ood,
            "id_retained": self.id_retained,
            "removed": self.removed,
            "regions_inpainted": self.regions_inpainted,
            "placement_failures": self.placement_failures,
            "service_errors": self.service_errors,
            "edited_file": self.edited_file,
        }
        if self.error:
            out["error"] = self.error
        return out


def _evidence_payload(
    decision: LabelDecision,
    original: Optional[Annotation],
    registry,
    region: CropRegion,
) -> dict[str, Any]:
    return {
        "prompt": decision.prompt,
        "scenario": decision.scenario.value,
        "original_label": registry.name_of(original.category_index) if original else None,
        "source_annotation_id": original.id if original else None,
        "region": {
            "bbox": [round(v, 2) for v in region.bbox.to_list()],
            "anchor": region.anchor.value,
            "side": region.side,
            "clamped": region.clamped,
        },
        "detections": [
            {
                "bbox": [round(v, 2) for v in item.record.bbox.to_list()],
                "label": item.record.label,
                "score": item.record.score,
                "stage": item.stage,
            }
            for item in decision.evidence
        ],
    }


def _safe_stem(image: ImageRecord) -> str:
    raw = f"{image.image_id}_{Path(image.file_path).stem}"
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", raw)


def _png_bytes(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def augment_image(
    image: ImageRecord,
    annotations: Sequence[Annotation],
    policy: VariantPolicy,
    catalog: PromptCatalog,
    inpainter: Inpainter,
    detector: Detector,
    registry,
    rng: random.Random,
    src_path: Path,
    out_images_dir: Optional[Path],
    mask_path: Optional[Path] = None,
) -> ImageResult:
    """Run the augmentation procedure on one image.

    Chooses target regions (respecting the minimum center distance),
    inpaints each, runs the label decision, and edits pixels/annotations
    accordingly. Service failures skip the affected region only; the
    original pixels and annotation survive untouched.
    """
    result = ImageResult(image_id=image.image_id, kept=list(annotations))

    try:
        with Image.open(src_path) as src:
            frame = src.convert("RGB")
    except OSError as exc:
        result.error = f"cannot read image: {exc}"
        result.placement_failures += 1
        logger.warning("image %r unusable: %s", image.image_id, exc)
        return result
    if frame.size != (image.width, image.height):
        result.error = f"file is {frame.size}, record says {(image.width, image.height)}"
        result.placement_failures += 1
        logger.warning("image %r dimension mismatch: %s", image.image_id, result.error)
        return result

    replace_pool: list[Annotation] = []
    if policy.replace_id_objects:
        lowered = {c.lower() for c in policy.replaceable_classes}
        replace_pool = [
            a
            for a in annotations
            if a.provenance is Provenance.ORIGINAL
            and registry.name_of(a.category_index).lower() in lowered
        ]
        rng.shuffle(replace_pool)

    mask = None
    if policy.road_placements and mask_path is not None:
        mask = load_road_mask(str(mask_path))
        if mask.shape != (image.height, image.width):
            raise MaskMismatch(
                f"mask {mask.shape} does not match image {image.image_id!r} "
                f"({image.height}, {image.width})"
            )

    if not replace_pool and mask is None:
        # Selected but nothing to work with: counts as a failed placement
        # so subset accounting stays honest.
        result.placement_failures += 1
        return result

    existing_boxes = [a.bbox for a in annotations if a.provenance is not Provenance.REMOVED]
    accepted: list[tuple[CropRegion, Optional[Annotation]]] = []
    accepted_regions: list[CropRegion] = []

    k = rng.randint(policy.per_image_count[0], policy.per_image_count[1])
    for _ in range(k):
        kinds = []
        if replace_pool:
            kinds.append(KIND_REPLACEMENT)
        if mask is not None:
            kinds.append(KIND_ROAD)
        if not kinds:
            break
        kind = kinds[0] if len(kinds) == 1 else kinds[rng.randrange(len(kinds))]

        if kind == KIND_REPLACEMENT:
            target = replace_pool.pop(0)
            region = crop_for_target(target.bbox, image)
            region = replace(region, source_annotation_id=target.id)
            if not min_distance_ok(accepted_regions, region):
                result.placement_failures += 1
                continue
            accepted.append((region, target))
            accepted_regions.append(region)
        else:
            region = sample_road_region(
                image, mask, existing_boxes, policy.road_region_side, rng, accepted=accepted_regions
            )
            if region is None:
                result.placement_failures += 1
                continue
            accepted.append((region, None))
            accepted_regions.append(region)
        result.kinds[kind] += 1

    by_id = {a.id: i for i, a in enumerate(result.kept)}
    for region, original in accepted:
        prompt = sample_prompt(catalog, rng)
        left, top, right, bottom = region.pixel_box()
        crop_png = _png_bytes(frame.crop((left, top, right, bottom)))
        try:
            painted = inpainter.inpaint(crop_png, prompt, region.side)
            decision = decide(region, painted, original, prompt, detector, policy, image, registry)
        except (TransportError, ServiceError) as exc:
            result.service_errors += 1
            logger.warning(
                "service failure on image %r region %s: %s", image.image_id, region.bbox.to_list(), exc
            )
            continue

        frame.paste(Image.open(io.BytesIO(painted)).convert("RGB"), (left, top))
        result.regions_inpainted += 1
        payload = _evidence_payload(decision, original, registry, region)

        if decision.scenario is Scenario.REFINED_OOD:
            result.refined_ood += 1
            if original is not None:
                idx = by_id[original.id]
                result.kept[idx] = replace(result.kept[idx], provenance=Provenance.REMOVED)
            result.new.append(
                PendingAnnotation(
                    bbox=decision.final_bbox,
                    category_index=decision.final_category,
                    prompt_used=prompt,
                    source_annotation_id=original.id if original else None,
                    evidence=payload,
                )
            )
        elif decision.scenario is Scenario.ID_RETAINED:
            result.id_retained += 1
            idx = by_id[original.id]
            result.kept[idx] = replace(
                result.kept[idx], provenance=Provenance.INPAINTED_ID_RETAINED, prompt_used=prompt
            )
            result.evidence_existing[original.id] = payload
        else:
            result.removed += 1
            if original is not None:
                idx = by_id[original.id]
                result.kept[idx] = replace(result.kept[idx], provenance=Provenance.REMOVED)
                result.evidence_existing[original.id] = payload

    if result.regions_inpainted > 0 and out_images_dir is not None:
        out_images_dir.mkdir(parents=True, exist_ok=True)
        name = f"{_safe_stem(image)}_syn.png"
        frame.save(out_images_dir / name, format="PNG")
        result.edited_file = f"{IMAGES_DIR}/{name}"
    return result


@dataclass
class RunReport:
    variant: str
    seed: int
    proportion: float
    images_total: int
    images_selected: int
    target_count: int
    images_augmented: int = 0
    refined_ood: int = 0
    id_retained: int = 0
    removed: int = 0
    regions_inpainted: int = 0
    placement_failures: int = 0
    service_errors: int = 0
    per_image: list[dict[str, Any]] = field(default_factory=list)
    config: dict[str, Any] = field(default_factory=dict)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "seed": self.seed,
            "proportion": self.proportion,
            "images_total": self.images_total,
            "images_selected": self.images_selected,
            "target_count": self.target_count,
            "images_augmented": self.images_augmented,
            "refined_ood": self.refined_ood,
            "id_retained": self.id_retained,
            "removed": self.removed,
            "regions_inpainted": self.regions_inpainted,
            "placement_failures": self.placement_failures,
            "service_errors": self.service_errors,
            "per_image": self.per_image,
            "config": self.config,
        }


def _next_int_id(annotations: Sequence[Annotation]) -> int:
    ints = [a.id for a in annotations if isinstance(a.id, int)]
    return (max(ints) + 1) if ints else 1


def resolve_image_path(base_dir: Path, file_path: str) -> Path:
    p = Path(file_path)
    return p if p.is_absolute() else base_dir / p


def run_pipeline(
    manifest: DatasetManifest,
    policy: VariantPolicy,
    catalog: PromptCatalog,
    inpainter: Inpainter,
    detector: Detector,
    seed: int,
    out_dir: str | Path,
    base_dir: str | Path = ".",
    workers: Optional[int] = None,
    config_echo: Optional[Mapping[str, Any]] = None,
) -> tuple[DatasetManifest, RunReport]:
    """Augment a dataset and write manifest, report, evidence and images.

    `base_dir` resolves relative image paths of the input manifest (usually
    the directory the input manifest was loaded from). Output image paths
    are written relative to `out_dir`; untouched images keep their original
    files, resolved to absolute paths.
    """
    out_dir = Path(out_dir)
    base_dir = Path(base_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    image_ids = [img.image_id for img in manifest.images]
    selected = set(
        choose_augmented_subset(image_ids, policy.ood_image_proportion, derive_rng(seed, "subset"))
    )
    report = RunReport(
        variant=policy.name,
        seed=seed,
        proportion=policy.ood_image_proportion,
        images_total=len(image_ids),
        images_selected=len(selected),
        target_count=math.floor(policy.ood_image_proportion * len(image_ids) + 0.5),
        config=dict(config_echo or {}),
    )

    def work(image: ImageRecord) -> ImageResult:
        rng = derive_rng(seed, "image", image.image_id)
        mask_path = (
            resolve_image_path(base_dir, image.road_mask_path) if image.road_mask_path else None
        )
        return augment_image(
            image,
            manifest.annotations_for(image.image_id),
            policy,
            catalog,
            inpainter,
            detector,
            manifest.registry,
            rng,
            resolve_image_path(base_dir, image.file_path),
            out_dir / IMAGES_DIR,
            mask_path=mask_path,
        )

    todo = [img for img in manifest.images if img.image_id in selected]
    results: dict[ImageId, ImageResult] = {}
    if todo:
        max_workers = workers or min(8, len(todo))
        if max_workers <= 1:
            for img in todo:
                results[img.image_id] = work(img)
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                for img, res in zip(todo, pool.map(work, todo)):
                    results[img.image_id] = res

    next_id = _next_int_id(manifest.annotations)
    out_annotations: list[Annotation] = []
    out_images: list[ImageRecord] = []
    evidence: dict[str, Any] = {}

    for img in manifest.images:
        res = results.get(img.image_id)
        # absolute, so the manifest resolves from wherever review later runs
        resolved = str(resolve_image_path(base_dir, img.file_path).resolve())
        resolved_mask = (
            str(resolve_image_path(base_dir, img.road_mask_path).resolve())
            if img.road_mask_path
            else None
        )
        if res is None:
            out_images.append(replace(img, file_path=resolved, road_mask_path=resolved_mask))
            out_annotations.extend(manifest.annotations_for(img.image_id))
            continue

        out_images.append(
            replace(
                img,
                file_path=res.edited_file or resolved,
                road_mask_path=resolved_mask,
                source_path=resolved if res.edited_file else img.source_path,
            )
        )
        out_annotations.extend(res.kept)
        for ann_id, payload in res.evidence_existing.items():
            evidence[str(ann_id)] = payload
        for pending in res.new:
            ann = Annotation(
                id=next_id,
                image_id=img.image_id,
                bbox=pending.bbox,
                category_index=pending.category_index,
                provenance=Provenance.INPAINTED_OOD,
                prompt_used=pending.prompt_used,
                audit_state=AuditState.UNCHECKED,
            )
            next_id += 1
            out_annotations.append(ann)
            evidence[str(ann.id)] = pending.evidence

        report.per_image.append(res.to_report_dict())
        report.refined_ood += res.refined_ood
        report.id_retained += res.id_retained
        report.removed += res.removed
        report.regions_inpainted += res.regions_inpainted
        report.placement_failures += res.placement_failures
        report.service_errors += res.service_errors
        if res.regions_inpainted > 0:
            report.images_augmented += 1

    extras = dict(manifest.extras)
    extras.update(
        {
            "proportion": policy.ood_image_proportion,
            "box_threshold": getattr(detector, "box_threshold", None),
            "text_threshold": getattr(detector, "text_threshold", None),
        }
    )
    out_manifest = DatasetManifest(
        images=tuple(out_images),
        annotations=tuple(out_annotations),
        registry=manifest.registry,
        variant=policy.name,
        seed=seed,
        tool_version=model.TOOL_VERSION,
        extras=extras,
    )

    save_manifest(out_manifest, out_dir / MANIFEST_FILE)
    _write_json(out_dir / EVIDENCE_FILE, evidence)
    _write_json(out_dir / REPORT_FILE, report.to_json_dict())
    return out_manifest, report


def _write_json(path: Path, doc: Any) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
