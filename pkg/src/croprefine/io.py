"""File naming conventions, raster loading, and atomic writes.

Grid artifacts are .npy v1.0 arrays named TILEID_YEAR_ROW_COL_<KIND>.npy.
Scene rasters come in as GeoTIFF (one file per band, or multi-band) or
.npy, listed by a JSON scene manifest.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
from PIL import Image, ImageSequence

IMAGE_KIND = "IMAGE"
VALIDITY_KIND = "VALIDITY"
CDL_LABEL_KIND = "PREPROCESSED_CDL_LABEL"
PROBS_KIND = "PROBS"
STATT_LABEL_KIND = "PREPROCESSED_STATT_LABEL"


def grid_file(grid_id: str, kind: str) -> str:
    return f"{grid_id}_{kind}.npy"


def parse_grid_file(name: str) -> tuple[str, str]:
    """Return (grid_id, kind) from a grid artifact filename."""
    stem = Path(name).name.removesuffix(".npy")
    for kind in (IMAGE_KIND, VALIDITY_KIND, CDL_LABEL_KIND, PROBS_KIND, STATT_LABEL_KIND):
        if stem.endswith("_" + kind):
            return stem.removesuffix("_" + kind), kind
    raise ValueError(f"unrecognized grid artifact name: {name}")


@dataclass
class SceneSpec:
    tile_id: str
    acquisition_time: datetime
    qa_path: Path
    image_path: Path | None = None  # multi-band raster
    band_paths: tuple[Path, ...] = ()  # one raster per band


def load_scene_manifest(path: str | Path) -> list[SceneSpec]:
    path = Path(path)
    payload = json.loads(path.read_text())
    base = path.parent
    specs = []
    for item in payload["scenes"]:
        image = item.get("image")
        bands = item.get("bands", [])
        if (image is None) == (not bands):
            raise ValueError("each scene needs exactly one of 'image' or 'bands'")
        specs.append(
            SceneSpec(
                tile_id=item["tile_id"],
                acquisition_time=datetime.fromisoformat(item["time"]),
                qa_path=base / item["qa"],
                image_path=base / image if image else None,
                band_paths=tuple(base / b for b in bands),
            )
        )
    return specs


def read_raster(path: str | Path) -> np.ndarray:
    """Read a single raster as an array: .npy directly, TIFF via Pillow
    (multi-frame TIFFs stack frames as the channel axis)."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    with Image.open(path) as img:
        frames = [np.asarray(frame) for frame in ImageSequence.Iterator(img)]
    if len(frames) == 1:
        return frames[0]
    return np.stack(frames, axis=-1)


def load_scene_arrays(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    """(reflectance (H, W, C), qa (H, W)) for one scene."""
    qa = read_raster(spec.qa_path)
    if spec.image_path is not None:
        reflectance = read_raster(spec.image_path)
        if reflectance.ndim == 2:
            reflectance = reflectance[..., None]
    else:
        reflectance = np.stack([read_raster(p) for p in spec.band_paths], axis=-1)
    return reflectance, qa


def atomic_save_npy(path: str | Path, array: np.ndarray) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npy.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            np.save(f, array)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
