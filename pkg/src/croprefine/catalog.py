"""Class catalog: internal code table, merge rules, and inclusion filtering.

Internal codes are dense 0..K with 0 reserved for "unknown". Raw product
codes (e.g. CDL numeric codes) live only in the catalog's source-code
lists, so swapping label products is a config change.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNKNOWN = 0

MIN_REGION_PIXELS = 1_000_000
MIN_VALIDATION_PIXELS = 100


@dataclass(frozen=True)
class CatalogEntry:
    code: int
    name: str
    is_crop: bool
    source_codes: tuple[int, ...] = ()
    region_pixel_count: int = 0
    validation_pixel_count: int = 0


def include_class(
    is_crop: bool,
    region_pixel_count: int,
    validation_pixel_count: int,
    *,
    min_region_pixels: int = MIN_REGION_PIXELS,
    min_validation_pixels: int = MIN_VALIDATION_PIXELS,
) -> bool:
    """Inclusion rule: crops need both the region-count and validation-count
    thresholds; non-crop classes only the region count."""
    if region_pixel_count < min_region_pixels:
        return False
    if is_crop and validation_pixel_count < min_validation_pixels:
        return False
    return True


class ClassCatalog:
    """Immutable table of prediction classes keyed by internal code 1..K."""

    def __init__(self, entries: list[CatalogEntry]):
        codes = [e.code for e in entries]
        if UNKNOWN in codes:
            raise ValueError("code 0 is reserved for unknown")
        if sorted(codes) != list(range(1, len(entries) + 1)):
            raise ValueError("entry codes must be dense 1..K")
        seen: set[int] = set()
        for e in entries:
            overlap = seen.intersection(e.source_codes)
            if overlap:
                raise ValueError(f"source codes {sorted(overlap)} appear in multiple entries")
            seen.update(e.source_codes)
        self.entries = sorted(entries, key=lambda e: e.code)

    @property
    def num_classes(self) -> int:
        """K, the number of prediction classes (unknown excluded)."""
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def crop_codes(self) -> list[int]:
        return [e.code for e in self.entries if e.is_crop]

    def entry(self, code: int) -> CatalogEntry:
        return self.entries[code - 1]

    def merge_table(self, max_source_code: int | None = None) -> np.ndarray:
        """Lookup array mapping raw product codes to internal codes.

        Raw codes absent from every entry map to unknown.
        """
        top = max((max(e.source_codes) for e in self.entries if e.source_codes), default=0)
        if max_source_code is not None:
            top = max(top, max_source_code)
        table = np.full(top + 1, UNKNOWN, dtype=np.uint8)
        for e in self.entries:
            for raw in e.source_codes:
                table[raw] = e.code
        return table

    @classmethod
    def from_json(cls, path: str | Path) -> "ClassCatalog":
        with open(path) as f:
            payload = json.load(f)
        entries = [
            CatalogEntry(
                code=int(item["code"]),
                name=item["name"],
                is_crop=bool(item["is_crop"]),
                source_codes=tuple(int(c) for c in item.get("source_codes", [])),
                region_pixel_count=int(item.get("region_pixel_count", 0)),
                validation_pixel_count=int(item.get("validation_pixel_count", 0)),
            )
            for item in payload["classes"]
        ]
        return cls(entries)

    def to_json(self, path: str | Path) -> None:
        payload = {
            "classes": [
                {
                    "code": e.code,
                    "name": e.name,
                    "is_crop": e.is_crop,
                    "source_codes": list(e.source_codes),
                    "region_pixel_count": e.region_pixel_count,
                    "validation_pixel_count": e.validation_pixel_count,
                }
                for e in self.entries
            ]
        }
        tmp = Path(path).with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, indent=2))
        tmp.replace(path)


def synthetic_catalog(num_crops: int = 4, num_other: int = 0) -> ClassCatalog:
    """Small catalog for desk-scale runs and tests."""
    entries = [
        CatalogEntry(code=i + 1, name=f"crop_{i + 1}", is_crop=True, source_codes=(i + 1,))
        for i in range(num_crops)
    ]
    for j in range(num_other):
        code = num_crops + j + 1
        entries.append(
            CatalogEntry(code=code, name=f"other_{j + 1}", is_crop=False, source_codes=(code,))
        )
    return ClassCatalog(entries)
