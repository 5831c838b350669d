"""Catalogs of unusual-object prompts used to drive inpainting.

Two lists ship with the package: a base list of out-of-place objects
(animals, furniture, props) and a lost-cargo extension (crates, pylons,
tires and similar road debris). Variants choose which lists are active.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import EmptyCatalog

BASE_CATALOG = "base"
LOSTANDFOUND_CATALOG = "lostandfound_ext"


@dataclass(frozen=True)
class PromptCatalog:
    entries: tuple[str, ...]
    sources: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.entries:
            raise EmptyCatalog(f"no usable prompts (sources: {self.sources or 'inline'})")

    def __len__(self) -> int:
        return len(self.entries)


def _dedupe(lines: Iterable[str]) -> tuple[str, ...]:
    """Trim, drop blanks and comment lines, keep first spelling of each
    case-insensitive duplicate, preserve order."""
    seen: set[str] = set()
    out: list[str] = []
    for line in lines:
        entry = line.strip()
        if not entry or entry.startswith("#"):
            continue
        key = entry.lower()
        if key in seen:
            continue
        seen.add(key)
        out.append(entry)
    return tuple(out)


def load_catalog(path: str | Path) -> PromptCatalog:
    path = Path(path)
    entries = _dedupe(path.read_text(encoding="utf-8").splitlines())
    return PromptCatalog(entries=entries, sources=(str(path),))


def merge_catalogs(*catalogs: PromptCatalog) -> PromptCatalog:
    entries = _dedupe(e for c in catalogs for e in c.entries)
    sources = tuple(s for c in catalogs for s in c.sources)
    return PromptCatalog(entries=entries, sources=sources)


def _packaged(name: str) -> PromptCatalog:
    text = resources.files("synoe").joinpath(f"data/prompts/{name}.txt").read_text(encoding="utf-8")
    return PromptCatalog(entries=_dedupe(text.splitlines()), sources=(f"synoe:{name}",))


def default_catalog(lostandfound: bool = False) -> PromptCatalog:
    """Packaged base list, optionally extended with lost-cargo classes."""
    base = _packaged(BASE_CATALOG)
    if not lostandfound:
        return base
    return merge_catalogs(base, _packaged(LOSTANDFOUND_CATALOG))


def lostandfound_extension() -> PromptCatalog:
    """Just the packaged lost-cargo list."""
    return _packaged(LOSTANDFOUND_CATALOG)


def sample_prompt(catalog: PromptCatalog, rng: random.Random) -> str:
    """Uniform draw; uniformity is over deduplicated entries."""
    return catalog.entries[rng.randrange(len(catalog.entries))]
