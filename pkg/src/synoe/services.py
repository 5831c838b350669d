"""Clients and mocks for the two model services the pipeline depends on.

The inpainting service redraws a square crop to contain a prompted object;
the detection service finds prompted objects in a crop. Both speak a small
JSON protocol (base64 PNG in, JSON out) so real model servers and the
packaged mocks are interchangeable:

    POST {base}/v1/inpaint  {"image": b64png, "prompt": str, "crop_side": int}
                            -> {"image": b64png}
    POST {base}/v1/detect   {"image": b64png, "prompt": str,
                             "box_threshold": float, "text_threshold": float}
                            -> {"detections": [{"bbox": [x,y,w,h],
                                                "label": str, "score": float}]}

The mocks are pure functions of their inputs plus a seed: the inpainter
stamps a rectangle whose fill color is a hash of the prompt, the detector
finds such stamps. That keeps every pipeline test hermetic and bit-stable.
"""

from __future__ import annotations

import base64
import hashlib
import io
import logging
import time
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Protocol, Sequence

import httpx
import numpy as np
from PIL import Image

from .errors import DimensionMismatch, ServiceError, TransportError
from .model import BBox

logger = logging.getLogger(__name__)

DEFAULT_BOX_THRESHOLD = 0.35
DEFAULT_TEXT_THRESHOLD = 0.25

# Multi-class detection prompts join class names with this separator.
PROMPT_SEPARATOR = " . "

INPAINT_PATH = "/v1/inpaint"
DETECT_PATH = "/v1/detect"

DEFAULT_TIMEOUT = 60.0
MAX_RETRIES = 3
BACKOFF_BASE = 0.25

# Mock pixel constants: erased area fill and the smallest blob the mock
# detector treats as an object.
ERASE_FILL = (60, 60, 60)
MIN_STAMP_PIXELS = 16


@dataclass(frozen=True)
class DetectionRecord:
    """One detector hit, bbox in the coordinates of the queried image."""

    bbox: BBox
    label: str
    score: float


def record_to_dict(rec: DetectionRecord) -> dict[str, Any]:
    return {"bbox": rec.bbox.to_list(), "label": rec.label, "score": rec.score}


def record_from_dict(raw: Mapping[str, Any]) -> DetectionRecord:
    return DetectionRecord(
        bbox=BBox.from_list(raw["bbox"]),
        label=str(raw["label"]),
        score=float(raw["score"]),
    )


class Inpainter(Protocol):
    def inpaint(self, image_png: bytes, prompt: str, crop_side: int) -> bytes: ...


class Detector(Protocol):
    box_threshold: float
    text_threshold: float

    def detect(self, image_png: bytes, prompt: str) -> list[DetectionRecord]: ...


def encode_png(image_png: bytes) -> str:
    return base64.b64encode(image_png).decode("ascii")


def decode_png(data: str) -> bytes:
    return base64.b64decode(data.encode("ascii"))


def _png_size(image_png: bytes) -> tuple[int, int]:
    with Image.open(io.BytesIO(image_png)) as img:
        return img.size


def _post_with_retry(
    client: httpx.Client,
    path: str,
    payload: dict[str, Any],
    retries: int,
    backoff: float,
) -> httpx.Response:
    """POST with exponential backoff on transport failures only; HTTP error
    statuses are a service answer, not a network condition, so they are
    surfaced immediately."""
    attempt = 0
    while True:
        try:
            response = client.post(path, json=payload)
        except httpx.TransportError as exc:
            if attempt >= retries:
                raise TransportError(f"{path}: unreachable after {retries} retries: {exc}") from exc
            delay = backoff * (2**attempt)
            logger.warning("transport error on %s (attempt %d): %s", path, attempt + 1, exc)
            time.sleep(delay)
            attempt += 1
            continue
        if response.status_code >= 400:
            detail = response.text[:500]
            raise ServiceError(f"{path}: HTTP {response.status_code}: {detail}")
        return response


class HttpInpainter:
    """Client for a remote inpainting service."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = MAX_RETRIES,
        backoff: float = BACKOFF_BASE,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self._retries = retries
        self._backoff = backoff
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout, transport=transport)

    def inpaint(self, image_png: bytes, prompt: str, crop_side: int) -> bytes:
        payload = {"image": encode_png(image_png), "prompt": prompt, "crop_side": crop_side}
        response = _post_with_retry(self._client, INPAINT_PATH, payload, self._retries, self._backoff)
        try:
            out = decode_png(response.json()["image"])
        except (KeyError, ValueError) as exc:
            raise ServiceError(f"{INPAINT_PATH}: malformed response: {exc}") from exc
        if _png_size(out) != _png_size(image_png):
            raise DimensionMismatch(
                f"inpaint reply size {_png_size(out)} does not match request {_png_size(image_png)}"
            )
        return out

    def close(self) -> None:
        self._client.close()


class HttpDetector:
    """Client for a remote open-vocabulary detection service."""

    def __init__(
        self,
        base_url: str,
        box_threshold: float = DEFAULT_BOX_THRESHOLD,
        text_threshold: float = DEFAULT_TEXT_THRESHOLD,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = MAX_RETRIES,
        backoff: float = BACKOFF_BASE,
        transport: Optional[httpx.BaseTransport] = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.box_threshold = box_threshold
        self.text_threshold = text_threshold
        self._retries = retries
        self._backoff = backoff
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout, transport=transport)

    def detect(self, image_png: bytes, prompt: str) -> list[DetectionRecord]:
        payload = {
            "image": encode_png(image_png),
            "prompt": prompt,
            "box_threshold": self.box_threshold,
            "text_threshold": self.text_threshold,
        }
        response = _post_with_retry(self._client, DETECT_PATH, payload, self._retries, self._backoff)
        try:
            raw = response.json()["detections"]
            records = [record_from_dict(r) for r in raw]
        except (KeyError, ValueError, TypeError) as exc:
            raise ServiceError(f"{DETECT_PATH}: malformed response: {exc}") from exc
        # Stable re-sort guarantees the descending-score contract even for
        # sloppy servers without reordering equal-score answers.
        records.sort(key=lambda r: -r.score)
        return records

    def close(self) -> None:
        self._client.close()


# --------------------------------------------------------------------------
# Deterministic mocks


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return h.digest()


def _unit(*parts: bytes) -> float:
    """Map arbitrary bytes to a reproducible float in [0, 1)."""
    return int.from_bytes(_digest(*parts)[:8], "big") / 2**64


def stamp_color(label: str) -> tuple[int, int, int]:
    """Fill color the mock inpainter uses for a label; also what the mock
    detector looks for. Derived from the normalized label so both sides
    agree without sharing state."""
    d = _digest(label.strip().lower().encode("utf-8"))
    return (d[0], d[1], d[2])


def _center_slice(h: int, w: int, fraction: float) -> tuple[int, int, int, int]:
    sh = max(1, round(h * fraction))
    sw = max(1, round(w * fraction))
    y0 = (h - sh) // 2
    x0 = (w - sw) // 2
    return y0, y0 + sh, x0, x0 + sw


def _to_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


class MockInpainter:
    """Stand-in for the generative service.

    Three outcomes mirror real diffusion behavior: "generate" paints a new
    object (clears the center area, stamps a color-coded rectangle),
    "noop" returns the crop untouched (object survived), "erase" clears the
    center without adding anything. The outcome is a hash of (seed, crop,
    prompt), so a given request always resolves the same way.
    """

    def __init__(self, seed: int = 0, noop_rate: float = 0.0, erase_rate: float = 0.0) -> None:
        if noop_rate + erase_rate > 1.0:
            raise ValueError("noop_rate + erase_rate must be <= 1")
        self._seed = str(seed).encode("ascii")
        self.noop_rate = noop_rate
        self.erase_rate = erase_rate

    def inpaint(self, image_png: bytes, prompt: str, crop_side: int) -> bytes:
        u = _unit(b"mode", self._seed, image_png, prompt.encode("utf-8"))
        if u < self.noop_rate:
            return image_png
        arr = np.array(Image.open(io.BytesIO(image_png)).convert("RGB"))
        h, w = arr.shape[:2]
        y0, y1, x0, x1 = _center_slice(h, w, 0.75)
        arr[y0:y1, x0:x1] = ERASE_FILL
        if u >= self.noop_rate + self.erase_rate:
            y0, y1, x0, x1 = _center_slice(h, w, 0.5)
            arr[y0:y1, x0:x1] = stamp_color(prompt)
        return _to_png(arr)


class MockDetector:
    """Stand-in for the detection service: finds mock stamps by color.

    Each class name in the prompt maps to its stamp color; a connected
    blob of at least MIN_STAMP_PIXELS of that color counts as one hit whose
    box is the blob extent. Scores are hash-derived, always at or above the
    box threshold, and reproducible for a given (seed, image, label).
    """

    def __init__(
        self,
        box_threshold: float = DEFAULT_BOX_THRESHOLD,
        text_threshold: float = DEFAULT_TEXT_THRESHOLD,
        seed: int = 0,
    ) -> None:
        self.box_threshold = box_threshold
        self.text_threshold = text_threshold
        self._seed = str(seed).encode("ascii")

    def detect(self, image_png: bytes, prompt: str) -> list[DetectionRecord]:
        arr = np.array(Image.open(io.BytesIO(image_png)).convert("RGB"))
        found: list[tuple[int, DetectionRecord]] = []
        for idx, token in enumerate(prompt.split(PROMPT_SEPARATOR)):
            token = token.strip()
            if not token:
                continue
            color = np.array(stamp_color(token), dtype=np.uint8)
            hit = np.all(arr == color, axis=-1)
            if int(hit.sum()) < MIN_STAMP_PIXELS:
                continue
            ys, xs = np.nonzero(hit)
            bbox = BBox(
                float(xs.min()),
                float(ys.min()),
                float(xs.max() - xs.min() + 1),
                float(ys.max() - ys.min() + 1),
            )
            u = _unit(b"score", self._seed, image_png, token.encode("utf-8"))
            score = round(self.box_threshold + (1.0 - self.box_threshold) * u, 6)
            found.append((idx, DetectionRecord(bbox=bbox, label=token, score=score)))
        found.sort(key=lambda t: (-t[1].score, t[0]))
        return [rec for _, rec in found]


class ScriptedDetector:
    """Detector answering from a fixed prompt -> records table (tests)."""

    def __init__(
        self,
        script: Mapping[str, Sequence[DetectionRecord]],
        default: Sequence[DetectionRecord] = (),
        box_threshold: float = DEFAULT_BOX_THRESHOLD,
        text_threshold: float = DEFAULT_TEXT_THRESHOLD,
    ) -> None:
        self._script = dict(script)
        self._default = list(default)
        self.box_threshold = box_threshold
        self.text_threshold = text_threshold

    def detect(self, image_png: bytes, prompt: str) -> list[DetectionRecord]:
        records = list(self._script.get(prompt, self._default))
        records.sort(key=lambda r: -r.score)
        return records
