"""Box arithmetic and crop placement for the augmentation pipeline."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .errors import DegenerateTarget, MaskMismatch
from .model import AnnotationId, BBox, ImageRecord

SMALL = "small"
MEDIUM = "medium"
LARGE = "large"

SMALL_MAX_AREA = 32 * 32
MEDIUM_MAX_AREA = 96 * 96

# Inpainting works on fixed-size square crops; the bucket decides the side.
CROP_SIDES = {SMALL: 128, MEDIUM: 256, LARGE: 512}
OVERSIZE_FACTOR = 1.25

# Placed regions keep their centers at least this far apart so synthetic
# objects do not pile up in one corner of a frame.
MIN_CENTER_DISTANCE = 512.0

ROAD_SAMPLE_ATTEMPTS = 100


class Anchor(str, Enum):
    REPLACED_ID_OBJECT = "replaced_id_object"
    ROAD_FREE_SPACE = "road_free_space"


@dataclass(frozen=True)
class CropRegion:
    """Square (unless clamped) window an inpainting request operates on."""

    bbox: BBox
    anchor: Anchor
    source_annotation_id: Optional[AnnotationId] = None
    side: int = 0
    clamped: bool = False

    def pixel_box(self) -> tuple[int, int, int, int]:
        """Integer (left, top, right, bottom) window used to cut and paste
        pixels. Anchored at the floor of the region origin; since region
        bounds are clamped to integer image edges this never leaves the image.
        """
        left = math.floor(self.bbox.x)
        top = math.floor(self.bbox.y)
        return (left, top, left + round(self.bbox.w), top + round(self.bbox.h))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, 0.0 when disjoint."""
    ix = min(a.x2, b.x2) - max(a.x, b.x)
    iy = min(a.y2, b.y2) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area() + b.area() - inter
    return inter / union


def size_bucket(box: BBox) -> str:
    """COCO-style size bucket from box area, half-open at 32^2 and 96^2."""
    area = box.area()
    if area < SMALL_MAX_AREA:
        return SMALL
    if area < MEDIUM_MAX_AREA:
        return MEDIUM
    return LARGE


def crop_for_target(target: BBox, image: ImageRecord) -> CropRegion:
    """Square crop window centered on `target`, slid (not shrunk) to stay
    inside the image.

    The side comes from the size bucket; targets larger than that get
    side = ceil(1.25 * max(w, h)) so the window always contains the box.
    Only when the image itself is smaller than the side does the window
    collapse to the image extent, flagged with clamped=True.
    """
    if target.w <= 0 or target.h <= 0:
        raise DegenerateTarget(f"target has non-positive extent: {target.to_list()}")
    side = CROP_SIDES[size_bucket(target)]
    longest = max(target.w, target.h)
    if longest > side:
        side = math.ceil(OVERSIZE_FACTOR * longest)

    cx, cy = target.center()
    clamped = False

    if side >= image.width:
        x, w = 0.0, float(image.width)
        clamped = clamped or side > image.width
    else:
        x, w = min(max(cx - side / 2.0, 0.0), float(image.width - side)), float(side)
    if side >= image.height:
        y, h = 0.0, float(image.height)
        clamped = clamped or side > image.height
    else:
        y, h = min(max(cy - side / 2.0, 0.0), float(image.height - side)), float(side)

    return CropRegion(
        bbox=BBox(x, y, w, h),
        anchor=Anchor.REPLACED_ID_OBJECT,
        side=side,
        clamped=clamped,
    )


def min_distance_ok(
    accepted: Sequence[CropRegion],
    candidate: CropRegion,
    min_distance: float = MIN_CENTER_DISTANCE,
) -> bool:
    """True when the candidate center is at least `min_distance` (inclusive)
    from the center of every already accepted region."""
    cx, cy = candidate.bbox.center()
    for region in accepted:
        ox, oy = region.bbox.center()
        if math.hypot(cx - ox, cy - oy) < min_distance:
            return False
    return True


def load_road_mask(path: str) -> np.ndarray:
    """Load a drivable-space mask as a boolean (H, W) array; nonzero = road."""
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


def sample_road_region(
    image: ImageRecord,
    mask: np.ndarray,
    existing: Sequence[BBox],
    side: int,
    rng: random.Random,
    accepted: Sequence[CropRegion] = (),
    max_attempts: int = ROAD_SAMPLE_ATTEMPTS,
    min_distance: float = MIN_CENTER_DISTANCE,
) -> Optional[CropRegion]:
    """Rejection-sample a free-space crop window centered on a road pixel.

    A candidate is accepted when the side x side window fits inside the
    image, overlaps no existing annotation box (IoU must be exactly 0),
    and keeps the minimum center distance to previously accepted regions.
    Returns None when no feasible placement is found within `max_attempts`.
    """
    if mask.shape != (image.height, image.width):
        raise MaskMismatch(
            f"mask {mask.shape} does not match image {image.image_id!r} "
            f"({image.height}, {image.width})"
        )
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return None

    for _ in range(max_attempts):
        i = rng.randrange(len(xs))
        px, py = int(xs[i]), int(ys[i])
        x = px - side / 2.0
        y = py - side / 2.0
        if x < 0 or y < 0 or x + side > image.width or y + side > image.height:
            continue
        candidate = CropRegion(
            bbox=BBox(x, y, float(side), float(side)),
            anchor=Anchor.ROAD_FREE_SPACE,
            side=side,
        )
        if any(iou(candidate.bbox, box) > 0.0 for box in existing):
            continue
        if not min_distance_ok(accepted, candidate, min_distance):
            continue
        return candidate
    return None
