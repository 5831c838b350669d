"""Synthetic outlier insertion and evaluation for street-scene datasets."""

from .model import (
    Annotation,
    AuditState,
    BBox,
    CategoryRegistry,
    DatasetManifest,
    ImageRecord,
    Provenance,
    load_manifest,
    save_manifest,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AuditState",
    "BBox",
    "CategoryRegistry",
    "DatasetManifest",
    "ImageRecord",
    "Provenance",
    "load_manifest",
    "save_manifest",
    "__version__",
]
