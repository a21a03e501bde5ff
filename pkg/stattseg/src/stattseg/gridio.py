"""File-level contract with the refinement pipeline: grid-named .npy
arrays in, probability rasters out."""
from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

IMAGE_SUFFIX = "_IMAGE.npy"
VALIDITY_SUFFIX = "_VALIDITY.npy"
LABEL_SUFFIX = "_PREPROCESSED_CDL_LABEL.npy"
PROBS_SUFFIX = "_PROBS.npy"


def list_grids(composites: Path) -> list[str]:
    return sorted(p.name.removesuffix(IMAGE_SUFFIX)
                  for p in composites.glob(f"*{IMAGE_SUFFIX}"))


def load_grid(composites: Path, labels_dir: Path | None, grid_id: str):
    """(stack, validity[, labels]) for one grid."""
    stack = np.load(composites / f"{grid_id}{IMAGE_SUFFIX}")
    vpath = composites / f"{grid_id}{VALIDITY_SUFFIX}"
    validity = np.load(vpath) if vpath.exists() else np.ones(stack.shape[0], dtype=bool)
    if labels_dir is None:
        return stack, validity
    labels = np.load(labels_dir / f"{grid_id}{LABEL_SUFFIX}")
    return stack, validity, labels


def load_splits(path: Path) -> dict[str, str]:
    with open(path) as f:
        return {row["grid_id"]: row["split"] for row in csv.DictReader(f)}


def save_probs(out_dir: Path, grid_id: str, probs: np.ndarray) -> Path:
    """Atomic write of the probability raster."""
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{grid_id}{PROBS_SUFFIX}"
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".npy.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            np.save(f, probs.astype(np.float32))
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target
