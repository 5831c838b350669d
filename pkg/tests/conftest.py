"""Shared fixtures: synthetic street scenes the mock services understand.

Fixture images stamp each object as a solid rectangle in the same
hash-derived color the mock inpainter/detector use, so a generated
dataset behaves like a tiny real one: detectors can find the objects,
inpainting visibly replaces them.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from synoe.model import BBox
from synoe.services import stamp_color

BACKGROUND = (17, 23, 29)


def write_image(path: Path, width: int, height: int, objects: list[tuple[BBox, str]]) -> None:
    arr = np.full((height, width, 3), BACKGROUND, dtype=np.uint8)
    for bbox, label in objects:
        x0, y0 = int(bbox.x), int(bbox.y)
        x1, y1 = int(bbox.x2), int(bbox.y2)
        arr[y0:y1, x0:x1] = stamp_color(label)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def write_road_mask(path: Path, width: int, height: int, y0: int, y1: int) -> None:
    arr = np.zeros((height, width), dtype=np.uint8)
    arr[y0:y1, :] = 255
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


DEFAULT_CATEGORIES = [
    {"id": i, "name": name}
    for i, name in enumerate(
        ["Bicycle", "Bus", "Car", "Construction", "Motorcycle", "Trailer", "Truck", "Pedestrian", "OOD"],
        start=1,
    )
]

CLASS_INDEX = {c["name"]: c["id"] for c in DEFAULT_CATEGORIES}


def make_street_dataset(
    root: Path,
    n_images: int,
    seed: int = 0,
    size: tuple[int, int] = (640, 480),
    road: bool = False,
    road_strip: tuple[int, int] = (320, 460),
    objects_per_image: tuple[int, int] = (1, 3),
    classes: tuple[str, ...] = ("Car", "Truck", "Pedestrian"),
) -> Path:
    """Write a small COCO-style dataset under `root`; returns manifest path.

    Objects are placed on a jittered grid in the upper image half so they
    never overlap each other (or the optional road strip at the bottom).
    Every image gets at least one object of the first class.
    """
    rng = random.Random(seed)
    width, height = size
    images = []
    annotations = []
    ann_id = 1

    cols = max(1, width // 200)
    cell_w = width // cols

    for i in range(1, n_images + 1):
        file_name = f"images/frame_{i:04d}.png"
        objects: list[tuple[BBox, str]] = []
        n_obj = rng.randint(*objects_per_image)
        cells = rng.sample(range(cols), min(n_obj, cols))
        for j, cell in enumerate(sorted(cells)):
            label = classes[0] if j == 0 else rng.choice(classes)
            w = rng.randint(24, min(110, cell_w - 20))
            h = rng.randint(20, 100)
            x = cell * cell_w + rng.randint(5, max(6, cell_w - w - 10))
            y = rng.randint(10, max(11, min(height // 2, height - h - 10)))
            bbox = BBox(float(x), float(y), float(w), float(h))
            objects.append((bbox, label))
            annotations.append(
                {
                    "id": ann_id,
                    "image_id": i,
                    "bbox": bbox.to_list(),
                    "category_id": CLASS_INDEX[label],
                }
            )
            ann_id += 1

        write_image(root / file_name, width, height, objects)
        record = {"id": i, "width": width, "height": height, "file_name": file_name}
        if road:
            mask_name = f"masks/frame_{i:04d}.png"
            write_road_mask(root / mask_name, width, height, *road_strip)
            record["road_mask"] = mask_name
        images.append(record)

    doc = {"images": images, "annotations": annotations, "categories": DEFAULT_CATEGORIES}
    manifest_path = root / "dataset.json"
    manifest_path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return manifest_path


@pytest.fixture
def street_dataset(tmp_path):
    """Factory fixture: build a dataset under a fresh tmp dir."""

    def build(n_images: int, **kwargs) -> Path:
        return make_street_dataset(tmp_path / "src", n_images, **kwargs)

    return build
