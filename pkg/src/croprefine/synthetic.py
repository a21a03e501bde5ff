"""Synthetic fixture generation: separable crop phenologies, field layouts,
cloudy scene stacks, and corrupted label rasters for desk-scale runs."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .catalog import UNKNOWN, ClassCatalog, synthetic_catalog
from .io import atomic_save_npy, atomic_write_text

DN_SCALE = 10000.0  # raw digital-number range of synthetic scenes
CLOUD_DN = 9500.0
OPAQUE_CLOUD_QA = np.uint16(1 << 10)


def make_phenologies(num_classes: int, num_windows: int) -> np.ndarray:
    """(K, T) NDVI curves with distinct peak windows, values in [0.05, 0.9]."""
    t = np.arange(num_windows)
    curves = np.zeros((num_classes, num_windows))
    for k in range(num_classes):
        peak = num_windows * (k + 1) / (num_classes + 1)
        width = num_windows / (num_classes + 2)
        curves[k] = 0.05 + 0.85 * np.exp(-((t - peak) ** 2) / (2 * width**2))
    return curves


def make_field_labels(
    size: int, num_classes: int, field_size: int, rng: np.random.Generator
) -> np.ndarray:
    """(size, size) codes 1..K laid out as square fields."""
    n = -(-size // field_size)
    blocks = rng.integers(1, num_classes + 1, size=(n, n))
    labels = np.repeat(np.repeat(blocks, field_size, axis=0), field_size, axis=1)
    return labels[:size, :size].astype(np.uint8)


def ndvi_to_bands(ndvi: np.ndarray, brightness: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Red/NIR pair whose NDVI equals the target exactly."""
    nir = brightness * (1.0 + ndvi)
    red = brightness * (1.0 - ndvi)
    return red, nir


def make_reflectance(
    labels: np.ndarray,
    phenologies: np.ndarray,
    num_windows: int,
    num_bands: int,
    red_band: int,
    nir_band: int,
    rng: np.random.Generator,
    noise: float = 0.02,
) -> np.ndarray:
    """(T, H, W, C) raw reflectance in digital numbers, NDVI per pixel
    following its class phenology plus noise. Unknown pixels get flat NDVI."""
    h, w = labels.shape
    ndvi = np.full((num_windows, h, w), 0.1)
    for code in np.unique(labels):
        if code == UNKNOWN:
            continue
        mask = labels == code
        ndvi[:, mask] = phenologies[code - 1][:, None]
    ndvi = np.clip(ndvi + rng.normal(0, noise, ndvi.shape), -0.99, 0.99)
    red, nir = ndvi_to_bands(ndvi)
    stack = rng.uniform(0.2, 0.6, (num_windows, h, w, num_bands))
    stack[..., red_band] = red
    stack[..., nir_band] = nir
    return stack * DN_SCALE


def plant_clouds(
    reflectance: np.ndarray, cloud_mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Overwrite masked pixels with a cloud value and build the QA raster."""
    out = reflectance.copy()
    out[cloud_mask] = CLOUD_DN
    qa = np.where(cloud_mask, OPAQUE_CLOUD_QA, np.uint16(0)).astype(np.uint16)
    return out, qa


def corrupt_labels(
    labels: np.ndarray,
    num_classes: int,
    rng: np.random.Generator,
    speckle_fraction: float = 0.15,
    jitter: bool = True,
) -> np.ndarray:
    """Speckle noise plus 1-pixel boundary jitter.

    Speckle reassigns the given fraction of pixels to a different random
    class; jitter replaces boundary pixels (prob 0.5) with the label of a
    random 4-neighbor.
    """
    out = labels.copy()
    h, w = labels.shape
    if jitter:
        padded = np.pad(labels, 1, mode="edge")
        neighbors = np.stack(
            [padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
        )
        boundary = (neighbors != labels[None]).any(axis=0)
        pick = rng.integers(0, 4, size=(h, w))
        jittered = np.take_along_axis(neighbors, pick[None], axis=0)[0]
        apply = boundary & (rng.random((h, w)) < 0.5)
        out[apply] = jittered[apply]
    n_speckle = int(round(speckle_fraction * labels.size))
    flat = rng.choice(labels.size, size=n_speckle, replace=False)
    shift = rng.integers(1, num_classes, size=n_speckle)
    out.ravel()[flat] = ((out.ravel()[flat] - 1 + shift) % num_classes + 1).astype(out.dtype)
    return out


def write_fixture(
    root: str | Path,
    *,
    tile_id: str = "T99FAKE",
    year: int = 2018,
    size: int = 128,
    grid_size: int = 32,
    num_classes: int = 4,
    num_windows: int = 24,
    num_bands: int = 10,
    red_band: int = 2,
    nir_band: int = 6,
    field_size: int = 16,
    speckle_fraction: float = 0.15,
    scenes_per_window: int = 2,
    seed: int = 7,
) -> dict:
    """Write a complete synthetic dataset: scene rasters + manifest, a
    corrupted label raster, ground truth, a class catalog, and a pipeline
    manifest. Returns a summary with key paths."""
    root = Path(root)
    scenes_dir = root / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    truth = make_field_labels(size, num_classes, field_size, rng)
    phen = make_phenologies(num_classes, num_windows)
    reflectance = make_reflectance(
        truth, phen, num_windows, num_bands, red_band, nir_band, rng
    )

    entries = []
    for t in range(num_windows):
        day = min(t * 14 + 3, 364)
        base = np.datetime64(f"{year}-01-01") + np.timedelta64(day, "D")
        for s in range(scenes_per_window):
            # complementary half-plane clouds so every pixel is clear somewhere
            mask = np.zeros((size, size), dtype=bool)
            if s == 0:
                mask[:, : size // 2] = True
            else:
                mask[:, size // 2 :] = rng.random((size, size // 2)) < 0.3
            scene, qa = plant_clouds(reflectance[t], mask)
            img_path = scenes_dir / f"{tile_id}_{t:02d}_{s}_image.npy"
            qa_path = scenes_dir / f"{tile_id}_{t:02d}_{s}_qa.npy"
            atomic_save_npy(img_path, scene.astype(np.float32))
            atomic_save_npy(qa_path, qa)
            entries.append(
                {
                    "tile_id": tile_id,
                    "time": f"{base}T1{s}:00:00",
                    "image": str(img_path.relative_to(root)),
                    "qa": str(qa_path.relative_to(root)),
                }
            )
    atomic_write_text(root / "scene_manifest.json", json.dumps({"scenes": entries}, indent=2))

    corrupted = corrupt_labels(truth, num_classes, rng, speckle_fraction)
    atomic_save_npy(root / f"{tile_id}_{year}_CDL.npy", corrupted)
    atomic_save_npy(root / "ground_truth.npy", truth)

    catalog = synthetic_catalog(num_crops=num_classes)
    catalog.to_json(root / "catalog.json")

    manifest = {
        "year": year,
        "scene_manifest": "scene_manifest.json",
        "label_rasters": {tile_id: f"{tile_id}_{year}_CDL.npy"},
        "output_root": "out",
        "class_catalog": "catalog.json",
        "grid_size": grid_size,
        "num_windows": num_windows,
        "window_days": 14,
        "bands": [f"B{i}" for i in range(num_bands)],
        "red_band": red_band,
        "nir_band": nir_band,
        "label_resample_factor": 1,
        "segmenter_mode": "mock",
        "eval_split": "all",
        "chip_window": num_windows // 2,
        "thresholds": {
            # heavy speckle + 8-neighbor erosion leaves well under half the
            # pixels known, so the curation floor drops for desk-scale runs
            "min_known_fraction": 0.15,
            "min_crop_fraction": 0.5,
            "t_min": 20,
        },
    }
    atomic_write_text(root / "manifest.json", json.dumps(manifest, indent=2))
    return {
        "manifest": root / "manifest.json",
        "ground_truth": root / "ground_truth.npy",
        "corrupted_labels": root / f"{tile_id}_{year}_CDL.npy",
        "tile_id": tile_id,
        "year": year,
    }
