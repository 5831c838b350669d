"""COCO-style detection metrics: AP across IoU thresholds, size-bucketed
AP, and average recall, per category and aggregated.

Matching follows the standard greedy protocol: detections claim ground
truth in descending score order, each taking the unclaimed box with the
highest IoU at or above the threshold. Ground truth outside the active
area range is ignored rather than counted, detections matched to ignored
ground truth vanish from the ranking, and unmatched detections outside
the range are not penalized. Cells with no countable ground truth report
the sentinel -1.0.

Declared tie conventions (measure-zero for real data, pinned so results
are reproducible): equal-IoU matches prefer the earliest ground-truth box
in input order, non-ignored before ignored; equal scores rank in input
order (manifest image order, then dump order within an image).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .errors import CategoryMismatch, InvariantError, ParseError, SchemaError
from .geometry import MEDIUM_MAX_AREA, SMALL_MAX_AREA
from .model import BBox, DatasetManifest, ImageId

IOU_THRESHOLDS = tuple(t / 100.0 for t in range(50, 100, 5))
RECALL_POINTS = tuple(i / 100.0 for i in range(101))
DEFAULT_MAX_DETS = (10, 100)

AREA_RANGES: dict[str, tuple[float, float]] = {
    "all": (0.0, math.inf),
    "small": (0.0, float(SMALL_MAX_AREA)),
    "medium": (float(SMALL_MAX_AREA), float(MEDIUM_MAX_AREA)),
    "large": (float(MEDIUM_MAX_AREA), math.inf),
}

SENTINEL = -1.0


@dataclass(frozen=True)
class DumpEntry:
    image_id: ImageId
    bbox: BBox
    category_index: int
    score: float


@dataclass(frozen=True)
class DetectionDump:
    entries: tuple[DumpEntry, ...]


def load_dump(path: str | Path) -> DetectionDump:
    """Read a detection dump: a JSON list of
    {"image_id", "bbox": [x,y,w,h], "category_id", "score"} objects."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: dump must be a JSON list")
    entries = []
    for pos, rec in enumerate(raw):
        ctx = f"{path}: entry {pos}"
        for key in ("image_id", "bbox", "category_id", "score"):
            if key not in rec:
                raise SchemaError(f"{ctx}: missing {key!r}")
        score = float(rec["score"])
        if not (math.isfinite(score) and 0.0 <= score <= 1.0):
            raise InvariantError(f"{ctx}: score {score} outside [0, 1]")
        try:
            bbox = BBox.from_list(rec["bbox"])
        except InvariantError as exc:
            raise InvariantError(f"{ctx}: {exc}") from exc
        entries.append(
            DumpEntry(
                image_id=rec["image_id"],
                bbox=bbox,
                category_index=int(rec["category_id"]),
                score=score,
            )
        )
    return DetectionDump(entries=tuple(entries))


def _iou_matrix(dets: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """Pairwise IoU, rows = detections, cols = ground truth; [x,y,w,h]."""
    if len(dets) == 0 or len(gts) == 0:
        return np.zeros((len(dets), len(gts)))
    dx2 = dets[:, 0] + dets[:, 2]
    dy2 = dets[:, 1] + dets[:, 3]
    gx2 = gts[:, 0] + gts[:, 2]
    gy2 = gts[:, 1] + gts[:, 3]
    ix = np.minimum(dx2[:, None], gx2[None, :]) - np.maximum(dets[:, 0, None], gts[None, :, 0])
    iy = np.minimum(dy2[:, None], gy2[None, :]) - np.maximum(dets[:, 1, None], gts[None, :, 1])
    inter = ix * iy
    empty = (ix <= 0) | (iy <= 0)
    d_area = dets[:, 2] * dets[:, 3]
    g_area = gts[:, 2] * gts[:, 3]
    union = (d_area[:, None] + g_area[None, :]) - inter
    out = np.where(empty, 0.0, inter / np.where(empty, 1.0, union))
    return out


def _greedy_match(ious: np.ndarray, gt_ignored: Sequence[bool], threshold: float) -> list[int]:
    """Per detection row, the claimed ground-truth column or -1.

    Rows are visited in order (callers pass score-sorted detections);
    non-ignored ground truth is preferred over ignored regardless of IoU;
    strict > keeps the earliest column on exact ties.
    """
    n_det, n_gt = ious.shape
    taken = [False] * n_gt
    out = [-1] * n_det
    for d in range(n_det):
        best = -1
        best_iou = 0.0
        for want_ignored in (False, True):
            if best != -1:
                break
            for g in range(n_gt):
                if taken[g] or gt_ignored[g] is not want_ignored:
                    continue
                v = float(ious[d, g])
                if v >= threshold and v > best_iou:
                    best = g
                    best_iou = v
        if best != -1:
            taken[best] = True
            out[d] = best
    return out


def match_detections(
    gt: Sequence[BBox],
    dets: Sequence[BBox],
    iou_threshold: float,
) -> list[Optional[int]]:
    """Greedy one-to-one matching for a single image and category.

    `dets` must already be sorted by descending score. Returns, aligned
    with `dets`, the matched ground-truth index or None.
    """
    det_arr = np.array([b.to_list() for b in dets], dtype=float).reshape(len(dets), 4)
    gt_arr = np.array([b.to_list() for b in gt], dtype=float).reshape(len(gt), 4)
    matched = _greedy_match(_iou_matrix(det_arr, gt_arr), [False] * len(gt), iou_threshold)
    return [m if m != -1 else None for m in matched]


def average_precision(tp_flags: Sequence[bool], total_gt: int) -> float:
    """AP from score-ordered TP/FP flags (ignored detections removed).

    101-point interpolation: precision envelope made monotone from the
    right, sampled at recall 0.00..1.00, averaged. Sentinel -1 when there
    is no ground truth; 0 when there are no detections but ground truth
    exists.
    """
    if total_gt == 0:
        return SENTINEL
    flags = np.asarray(tp_flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = tp / total_gt
    precision = tp / (tp + fp)
    for i in range(len(precision) - 2, -1, -1):
        if precision[i] < precision[i + 1]:
            precision[i] = precision[i + 1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < len(recall), precision[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(np.mean(sampled))


@dataclass(frozen=True)
class CategoryMetrics:
    ap50_95: float
    ap50: float
    ap75: float
    ap_small: float
    ap_medium: float
    ap_large: float
    ar_10: float
    ar_100: float

    def to_dict(self) -> dict[str, float]:
        return {
            "ap50_95": self.ap50_95,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_small": self.ap_small,
            "ap_medium": self.ap_medium,
            "ap_large": self.ap_large,
            "ar_10": self.ar_10,
            "ar_100": self.ar_100,
        }


@dataclass(frozen=True)
class EvalReport:
    per_category: dict[str, CategoryMetrics]
    map_id: float
    class_agnostic: bool

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "per_category": {name: m.to_dict() for name, m in self.per_category.items()},
            "map_id": self.map_id,
            "class_agnostic": self.class_agnostic,
        }

    def format_table(self) -> str:
        headers = ("category", "AP", "AP50", "AP75", "APs", "APm", "APl", "AR10", "AR100")
        rows = [headers]
        for name, m in self.per_category.items():
            rows.append(
                (name,)
                + tuple(
                    f"{v:.4f}" if v != SENTINEL else "-"
                    for v in (m.ap50_95, m.ap50, m.ap75, m.ap_small, m.ap_medium, m.ap_large, m.ar_10, m.ar_100)
                )
            )
        rows.append(("mAP", f"{self.map_id:.4f}" if self.map_id != SENTINEL else "-") + ("",) * 7)
        widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in rows]
        return "\n".join(lines)


class _CategoryCells:
    """Per-image det/gt arrays and IoU matrices for one category."""

    def __init__(self) -> None:
        self.gt_boxes: list[np.ndarray] = []
        self.det_boxes: list[np.ndarray] = []
        self.det_scores: list[np.ndarray] = []
        self.ious: list[np.ndarray] = []

    def add_cell(self, gt: list[list[float]], dets: list[tuple[list[float], float, int]]) -> None:
        dets = sorted(dets, key=lambda t: (-t[1], t[2]))
        gt_arr = np.array(gt, dtype=float).reshape(len(gt), 4)
        det_arr = np.array([d[0] for d in dets], dtype=float).reshape(len(dets), 4)
        self.gt_boxes.append(gt_arr)
        self.det_boxes.append(det_arr)
        self.det_scores.append(np.array([d[1] for d in dets], dtype=float))
        self.ious.append(_iou_matrix(det_arr, gt_arr))


def _run_combo(cells: _CategoryCells, threshold: float, area: str, max_det: int) -> tuple[np.ndarray, int]:
    """Match every cell and produce globally score-sorted TP flags
    (ignored detections removed) plus the countable ground-truth total."""
    lo, hi = AREA_RANGES[area]
    all_scores: list[np.ndarray] = []
    all_tp: list[np.ndarray] = []
    all_ig: list[np.ndarray] = []
    npig = 0
    for gt_arr, det_arr, scores, ious in zip(cells.gt_boxes, cells.det_boxes, cells.det_scores, cells.ious):
        k = min(max_det, len(det_arr))
        areas = gt_arr[:, 2] * gt_arr[:, 3]
        gt_ignored = [not (lo <= a < hi) for a in areas]
        npig += sum(1 for ig in gt_ignored if not ig)
        matches = _greedy_match(ious[:k], gt_ignored, threshold)
        tp = np.zeros(k, dtype=bool)
        ig = np.zeros(k, dtype=bool)
        for d, g in enumerate(matches):
            if g != -1:
                if gt_ignored[g]:
                    ig[d] = True
                else:
                    tp[d] = True
            else:
                det_area = det_arr[d, 2] * det_arr[d, 3]
                if not (lo <= det_area < hi):
                    ig[d] = True
        all_scores.append(scores[:k])
        all_tp.append(tp)
        all_ig.append(ig)
    scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
    tp = np.concatenate(all_tp) if all_tp else np.zeros(0, dtype=bool)
    ig = np.concatenate(all_ig) if all_ig else np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    tp = tp[order]
    ig = ig[order]
    return tp[~ig], npig


def _mean_or_sentinel(values: Sequence[float]) -> float:
    usable = [v for v in values if v != SENTINEL]
    if not usable:
        return SENTINEL
    return float(np.mean(usable))


def _category_metrics(cells: _CategoryCells, max_dets: Sequence[int]) -> CategoryMetrics:
    ap: dict[str, list[float]] = {}
    for area in AREA_RANGES:
        ap[area] = []
        for thr in IOU_THRESHOLDS:
            flags, npig = _run_combo(cells, thr, area, max(max_dets))
            ap[area].append(average_precision(flags, npig))

    recalls: dict[int, list[float]] = {}
    for k in max_dets:
        recalls[k] = []
        for thr in IOU_THRESHOLDS:
            flags, npig = _run_combo(cells, thr, "all", k)
            if npig == 0:
                recalls[k].append(SENTINEL)
            else:
                recalls[k].append(float(np.sum(flags)) / npig)

    return CategoryMetrics(
        ap50_95=_mean_or_sentinel(ap["all"]),
        ap50=ap["all"][0],
        ap75=ap["all"][IOU_THRESHOLDS.index(0.75)],
        ap_small=_mean_or_sentinel(ap["small"]),
        ap_medium=_mean_or_sentinel(ap["medium"]),
        ap_large=_mean_or_sentinel(ap["large"]),
        ar_10=_mean_or_sentinel(recalls[min(max_dets)]),
        ar_100=_mean_or_sentinel(recalls[max(max_dets)]),
    )


def evaluate(
    manifest: DatasetManifest,
    dump: DetectionDump,
    class_agnostic: bool = False,
    max_dets: Sequence[int] = DEFAULT_MAX_DETS,
) -> EvalReport:
    """Score a detection dump against a manifest.

    Ground truth is the manifest's active annotations (removed ones do not
    participate). Dump categories must be registry indices; unknown image
    ids are an error. With class_agnostic=True all boxes collapse into one
    pseudo-category, reported as "agnostic".
    """
    registry = manifest.registry
    known_images = {img.image_id for img in manifest.images}
    bad_imgs = sorted({str(e.image_id) for e in dump.entries if e.image_id not in known_images})
    if bad_imgs:
        raise InvariantError(f"dump references unknown image ids: {', '.join(bad_imgs)}")
    bad_cats = sorted({e.category_index for e in dump.entries if not 1 <= e.category_index <= registry.ood_index})
    if bad_cats:
        raise CategoryMismatch(f"dump categories outside registry: {bad_cats}")

    gt = manifest.active_annotations()
    if class_agnostic:
        categories = [(0, "agnostic")]
        gt_cat = {ann.id: 0 for ann in gt}
        det_cat = [0] * len(dump.entries)
        id_names: list[str] = ["agnostic"]
    else:
        categories = [(i, name) for i, name in enumerate(registry.all_classes(), start=1)]
        gt_cat = {ann.id: ann.category_index for ann in gt}
        det_cat = [e.category_index for e in dump.entries]
        id_names = [name for name in registry.id_classes]

    per_category: dict[str, CategoryMetrics] = {}
    for cat_index, cat_name in categories:
        cells = _CategoryCells()
        for img in manifest.images:
            gt_boxes = [
                ann.bbox.to_list()
                for ann in gt
                if ann.image_id == img.image_id and gt_cat[ann.id] == cat_index
            ]
            dets = [
                (e.bbox.to_list(), e.score, pos)
                for pos, e in enumerate(dump.entries)
                if e.image_id == img.image_id and det_cat[pos] == cat_index
            ]
            cells.add_cell(gt_boxes, dets)
        per_category[cat_name] = _category_metrics(cells, tuple(max_dets))

    id_aps = [per_category[name].ap50_95 for name in id_names if per_category[name].ap50_95 != SENTINEL]
    map_id = float(np.mean(id_aps)) if id_aps else SENTINEL
    return EvalReport(per_category=per_category, map_id=map_id, class_agnostic=class_agnostic)
