"""Dataset model: COCO-style manifests with provenance and audit tracking.

A manifest is the unit of exchange between every stage of the pipeline:
generation reads one and writes an augmented one, audit annotates it,
review edits it, eval consumes it as ground truth. Saved manifests are
byte-stable so identical runs can be compared with `cmp`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

from .errors import InvariantError, ParseError, SchemaError

TOOL_VERSION = "0.1.0"

# Street-scene object classes used when an input file carries no categories.
DEFAULT_ID_CLASSES = (
    "Bicycle",
    "Bus",
    "Car",
    "Construction",
    "Motorcycle",
    "Trailer",
    "Truck",
    "Pedestrian",
)

OOD_CLASS_NAME = "OOD"

VARIANT_NAMES = ("original", "V1", "V2", "V3", "V4", "V5")

# Saved coordinates are rounded to 2 decimals; containment checks allow
# the resulting quantization slack.
COORD_EPS = 1e-6

ImageId = Union[int, str]
AnnotationId = Union[int, str]


class Provenance(str, Enum):
    ORIGINAL = "original"
    INPAINTED_OOD = "inpainted_ood"
    INPAINTED_ID_RETAINED = "inpainted_id_retained"
    REMOVED = "removed"


class AuditState(str, Enum):
    UNCHECKED = "unchecked"
    CONFIRMED = "confirmed"
    AMBIGUOUS = "ambiguous"
    HUMAN_RESOLVED = "human_resolved"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, (x, y) top-left, w/h extents."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.w, self.h)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals):
            raise InvariantError(f"bbox values must be finite numbers, got {vals!r}")
        if self.w <= 0 or self.h <= 0:
            raise InvariantError(f"bbox extents must be positive, got w={self.w} h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def area(self) -> float:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @staticmethod
    def from_list(vals: Sequence[float]) -> "BBox":
        if len(vals) != 4:
            raise InvariantError(f"bbox must have 4 entries, got {len(vals)}")
        return BBox(float(vals[0]), float(vals[1]), float(vals[2]), float(vals[3]))


def quantize_bbox(box: BBox) -> BBox:
    """Round coordinates to the 2-decimal precision used on disk."""
    return BBox(round(box.x, 2), round(box.y, 2), round(box.w, 2), round(box.h, 2))


@dataclass(frozen=True)
class CategoryRegistry:
    """Ordered in-distribution classes plus one synthetic-outlier class.

    Indices are 1-based; the outlier class is always the last index n+1 so
    that augmented datasets extend the original label space in place.
    """

    id_classes: tuple[str, ...] = DEFAULT_ID_CLASSES
    ood_class_name: str = OOD_CLASS_NAME

    def __post_init__(self) -> None:
        if not self.id_classes:
            raise InvariantError("registry needs at least one in-distribution class")
        lowered = [c.lower() for c in self.id_classes]
        if len(set(lowered)) != len(lowered):
            raise InvariantError(f"duplicate class names in registry: {self.id_classes}")
        if self.ood_class_name.lower() in lowered:
            raise InvariantError(f"{self.ood_class_name!r} is reserved for the outlier class")

    @property
    def num_id_classes(self) -> int:
        return len(self.id_classes)

    @property
    def ood_index(self) -> int:
        return len(self.id_classes) + 1

    def all_classes(self) -> tuple[str, ...]:
        return self.id_classes + (self.ood_class_name,)

    def name_of(self, index: int) -> str:
        if not 1 <= index <= self.ood_index:
            raise InvariantError(f"category index {index} outside [1, {self.ood_index}]")
        return self.all_classes()[index - 1]

    def index_of(self, name: str) -> int | None:
        """Case-insensitive lookup over ID classes and the outlier class."""
        wanted = name.strip().lower()
        for i, cls in enumerate(self.all_classes(), start=1):
            if cls.lower() == wanted:
                return i
        return None

    def is_id_class(self, name: str) -> bool:
        idx = self.index_of(name)
        return idx is not None and idx != self.ood_index


@dataclass(frozen=True)
class Annotation:
    id: AnnotationId
    image_id: ImageId
    bbox: BBox
    category_index: int
    provenance: Provenance = Provenance.ORIGINAL
    prompt_used: str | None = None
    audit_state: AuditState = AuditState.UNCHECKED


@dataclass(frozen=True)
class ImageRecord:
    image_id: ImageId
    width: int
    height: int
    file_path: str
    road_mask_path: str | None = None
    # pre-edit image, kept when file_path points at an augmented render
    source_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    images: tuple[ImageRecord, ...]
    annotations: tuple[Annotation, ...]
    registry: CategoryRegistry = field(default_factory=CategoryRegistry)
    variant: str = "original"
    seed: int = 0
    tool_version: str = TOOL_VERSION
    extras: Mapping[str, Any] = field(default_factory=dict)

    def image_by_id(self, image_id: ImageId) -> ImageRecord:
        for img in self.images:
            if img.image_id == image_id:
                return img
        raise InvariantError(f"unknown image id {image_id!r}")

    def annotations_for(self, image_id: ImageId) -> tuple[Annotation, ...]:
        return tuple(a for a in self.annotations if a.image_id == image_id)

    def active_annotations(self) -> tuple[Annotation, ...]:
        """Annotations that still exist as labels (removed ones are kept
        in the file for traceability but excluded from training/eval)."""
        return tuple(a for a in self.annotations if a.provenance is not Provenance.REMOVED)

    def validate(self) -> None:
        problems: list[str] = []
        if self.variant not in VARIANT_NAMES:
            problems.append(f"variant {self.variant!r} not one of {VARIANT_NAMES}")

        seen_imgs: set[ImageId] = set()
        by_id: dict[ImageId, ImageRecord] = {}
        for img in self.images:
            if img.image_id in seen_imgs:
                problems.append(f"duplicate image id {img.image_id!r}")
            seen_imgs.add(img.image_id)
            by_id[img.image_id] = img
            if img.width < 1 or img.height < 1:
                problems.append(f"image {img.image_id!r} has non-positive dimensions")

        seen_anns: set[AnnotationId] = set()
        for ann in self.annotations:
            if ann.id in seen_anns:
                problems.append(f"duplicate annotation id {ann.id!r}")
            seen_anns.add(ann.id)
            img = by_id.get(ann.image_id)
            if img is None:
                problems.append(f"annotation {ann.id!r} references missing image {ann.image_id!r}")
                continue
            b = ann.bbox
            if b.x < -COORD_EPS or b.y < -COORD_EPS or b.x2 > img.width + COORD_EPS or b.y2 > img.height + COORD_EPS:
                problems.append(f"annotation {ann.id!r} bbox {b.to_list()} exceeds image bounds")
            if not 1 <= ann.category_index <= self.registry.ood_index:
                problems.append(f"annotation {ann.id!r} category {ann.category_index} outside registry")
            if ann.provenance is Provenance.INPAINTED_OOD:
                if ann.category_index != self.registry.ood_index:
                    problems.append(f"annotation {ann.id!r} is inpainted_ood but not labelled {self.registry.ood_class_name}")
                if not ann.prompt_used:
                    problems.append(f"annotation {ann.id!r} is inpainted_ood but carries no prompt")
        if problems:
            raise InvariantError("; ".join(problems))

    def to_json_dict(self) -> dict[str, Any]:
        images = []
        for img in self.images:
            rec: dict[str, Any] = {
                "id": img.image_id,
                "width": img.width,
                "height": img.height,
                "file_name": img.file_path,
            }
            if img.road_mask_path is not None:
                rec["road_mask"] = img.road_mask_path
            if img.source_path is not None:
                rec["source_file"] = img.source_path
            images.append(rec)

        annotations = []
        for ann in self.annotations:
            box = quantize_bbox(ann.bbox)
            rec = {
                "id": ann.id,
                "image_id": ann.image_id,
                "bbox": box.to_list(),
                "category_id": ann.category_index,
                "provenance": ann.provenance.value,
                "audit_state": ann.audit_state.value,
            }
            if ann.prompt_used is not None:
                rec["prompt"] = ann.prompt_used
            annotations.append(rec)

        categories = [
            {"id": i, "name": name}
            for i, name in enumerate(self.registry.all_classes(), start=1)
        ]
        meta: dict[str, Any] = dict(self.extras)
        meta.update({"variant": self.variant, "seed": self.seed, "tool_version": self.tool_version})
        return {"images": images, "annotations": annotations, "categories": categories, "meta": meta}


def _require(record: Mapping[str, Any], key: str, context: str) -> Any:
    if key not in record:
        raise SchemaError(f"{context}: missing required field {key!r}")
    return record[key]


def _build_registry(raw_categories: Any) -> tuple[CategoryRegistry, dict[int, int]]:
    """Build a registry from a COCO categories list.

    Arbitrary ids are remapped to contiguous 1..n in ascending original-id
    order; a category named like the outlier class is pinned to the last
    index, appended if absent. Returns the registry and old-id -> new-id map.
    """
    if not isinstance(raw_categories, list) or not raw_categories:
        raise SchemaError("categories must be a non-empty list")
    cats = []
    for rec in raw_categories:
        cid = _require(rec, "id", "category")
        name = _require(rec, "name", f"category {cid!r}")
        if not isinstance(cid, int):
            raise SchemaError(f"category id {cid!r} must be an integer")
        cats.append((cid, str(name)))
    cats.sort(key=lambda c: c[0])

    ood_entries = [(cid, name) for cid, name in cats if name.lower() == OOD_CLASS_NAME.lower()]
    if len(ood_entries) > 1:
        raise SchemaError("multiple outlier categories in input")
    id_entries = [(cid, name) for cid, name in cats if name.lower() != OOD_CLASS_NAME.lower()]
    if not id_entries:
        raise SchemaError("categories contain no in-distribution classes")

    registry = CategoryRegistry(id_classes=tuple(name for _, name in id_entries))
    remap = {cid: i for i, (cid, _) in enumerate(id_entries, start=1)}
    if ood_entries:
        remap[ood_entries[0][0]] = registry.ood_index
    return registry, remap


def load_manifest(path: str | Path, drop_classes: Iterable[str] = ()) -> DatasetManifest:
    """Load a manifest or plain COCO file, upgrading the latter with defaults.

    Plain COCO inputs get provenance "original", audit state "unchecked", the
    default street-scene registry when no categories are present, and default
    meta. `drop_classes` removes the named categories (case-insensitive) and
    their annotations before the registry is built.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: top-level value must be an object")

    raw_images = _require(raw, "images", str(path))
    raw_annotations = _require(raw, "annotations", str(path))
    if not isinstance(raw_images, list) or not isinstance(raw_annotations, list):
        raise SchemaError(f"{path}: images and annotations must be lists")

    dropped = {c.strip().lower() for c in drop_classes if c.strip()}
    extras: dict[str, Any] = {}

    if "categories" in raw and raw["categories"]:
        kept = []
        dropped_ids = set()
        dropped_names = []
        for rec in raw["categories"]:
            name = str(rec.get("name", ""))
            if name.lower() in dropped:
                dropped_ids.add(rec.get("id"))
                dropped_names.append(name)
            else:
                kept.append(rec)
        registry, remap = _build_registry(kept)
    else:
        # No categories: interpret category ids against the default registry.
        base = list(enumerate(DEFAULT_ID_CLASSES, start=1))
        kept_default = [(i, name) for i, name in base if name.lower() not in dropped]
        dropped_names = [name for i, name in base if name.lower() in dropped]
        dropped_ids = {i for i, name in base if name.lower() in dropped}
        registry = CategoryRegistry(id_classes=tuple(name for _, name in kept_default))
        remap = {i: j for j, (i, _) in enumerate(kept_default, start=1)}
        remap[len(DEFAULT_ID_CLASSES) + 1] = registry.ood_index
    if dropped_names:
        extras["dropped_classes"] = sorted(dropped_names)

    images = []
    for rec in raw_images:
        iid = _require(rec, "id", "image")
        images.append(
            ImageRecord(
                image_id=iid,
                width=int(_require(rec, "width", f"image {iid!r}")),
                height=int(_require(rec, "height", f"image {iid!r}")),
                file_path=str(_require(rec, "file_name", f"image {iid!r}")),
                road_mask_path=rec.get("road_mask"),
                source_path=rec.get("source_file"),
            )
        )

    annotations = []
    for rec in raw_annotations:
        aid = _require(rec, "id", "annotation")
        ctx = f"annotation {aid!r}"
        cat_raw = _require(rec, "category_id", ctx)
        if cat_raw in dropped_ids:
            continue
        if cat_raw not in remap:
            raise SchemaError(f"{ctx}: category_id {cat_raw!r} not in categories")
        bbox_raw = _require(rec, "bbox", ctx)
        try:
            bbox = BBox.from_list(bbox_raw)
        except InvariantError as exc:
            raise InvariantError(f"{ctx}: {exc}") from exc
        try:
            provenance = Provenance(rec.get("provenance", "original"))
            audit_state = AuditState(rec.get("audit_state", "unchecked"))
        except ValueError as exc:
            raise SchemaError(f"{ctx}: {exc}") from exc
        annotations.append(
            Annotation(
                id=aid,
                image_id=_require(rec, "image_id", ctx),
                bbox=bbox,
                category_index=remap[cat_raw],
                provenance=provenance,
                prompt_used=rec.get("prompt"),
                audit_state=audit_state,
            )
        )

    meta = raw.get("meta") or {}
    if not isinstance(meta, dict):
        raise SchemaError(f"{path}: meta must be an object")
    meta = dict(meta)
    variant = meta.pop("variant", "original")
    seed = meta.pop("seed", 0)
    tool_version = meta.pop("tool_version", TOOL_VERSION)
    if "dropped_classes" in extras:
        prior = meta.get("dropped_classes") or []
        extras["dropped_classes"] = sorted(set(prior) | set(extras["dropped_classes"]))
    meta.update(extras)

    manifest = DatasetManifest(
        images=tuple(images),
        annotations=tuple(annotations),
        registry=registry,
        variant=variant,
        seed=seed,
        tool_version=tool_version,
        extras=meta,
    )
    manifest.validate()
    return manifest


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write a validated manifest with sorted keys and 2-decimal coordinates.

    The byte stream is a pure function of the manifest contents, so repeat
    runs of a deterministic pipeline produce identical files.
    """
    manifest.validate()
    text = json.dumps(manifest.to_json_dict(), sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def with_annotations(manifest: DatasetManifest, annotations: Iterable[Annotation]) -> DatasetManifest:
    return replace(manifest, annotations=tuple(annotations))
