"""Label preparation: resampling, class merging, boundary erosion,
small-component removal, grid curation, and train/val/test splitting."""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import ndimage

from .catalog import UNKNOWN, ClassCatalog

LOGGER = logging.getLogger(__name__)

MAX_COMPONENT_REMOVAL_SIZE = 4
MIN_KNOWN_FRACTION = 0.5
MIN_CROP_FRACTION = 0.5
SPLIT_TARGETS = (0.6, 0.2, 0.2)

# 4-connectivity for component analysis; avoids diagonal chains counting
# as one field.
FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def resample_labels(coarse: np.ndarray, factor: int = 3) -> np.ndarray:
    """Nearest-neighbor block replication: each coarse cell becomes a
    factor x factor block of identical codes."""
    return np.repeat(np.repeat(coarse, factor, axis=0), factor, axis=1)


def merge_classes(raw: np.ndarray, catalog: ClassCatalog) -> tuple[np.ndarray, int]:
    """Map raw product codes through the catalog's source-code table.

    Raw codes absent from the catalog map to unknown; returns the merged
    grid and the count of such unmapped pixels.
    """
    raw = np.asarray(raw)
    table = catalog.merge_table(max_source_code=int(raw.max(initial=0)))
    merged = table[raw]
    mapped_raw = {c for e in catalog.entries for c in e.source_codes}
    unmapped = int(np.count_nonzero((merged == UNKNOWN) & (raw != UNKNOWN) & ~np.isin(raw, sorted(mapped_raw))))
    return merged, unmapped


def erode_labels(codes: np.ndarray) -> np.ndarray:
    """1-pixel class-wise erosion with an 8-neighborhood.

    A pixel becomes unknown unless all 8 neighbors share its code; the
    array border counts as unknown, so border pixels always erode.
    """
    padded = np.pad(codes, 1, constant_values=UNKNOWN)
    keep = np.ones(codes.shape, dtype=bool)
    h, w = codes.shape
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            neighbor = padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
            keep &= neighbor == codes
    out = np.where(keep, codes, UNKNOWN)
    return out.astype(codes.dtype)


def remove_small_components(
    codes: np.ndarray, max_size: int = MAX_COMPONENT_REMOVAL_SIZE
) -> np.ndarray:
    """Set every 4-connected same-code component of size <= max_size to unknown."""
    out = codes.copy()
    for code in np.unique(codes):
        if code == UNKNOWN:
            continue
        labeled, n = ndimage.label(codes == code, structure=FOUR_CONNECTED)
        if n == 0:
            continue
        sizes = np.bincount(labeled.ravel())
        small = np.flatnonzero(sizes[1:] <= max_size) + 1
        if small.size:
            out[np.isin(labeled, small)] = UNKNOWN
    return out


def prepare_labels(raw: np.ndarray, catalog: ClassCatalog) -> np.ndarray:
    """merge -> erode -> remove small components."""
    merged, unmapped = merge_classes(raw, catalog)
    if unmapped:
        LOGGER.info("%d pixels had raw codes outside the catalog", unmapped)
    return remove_small_components(erode_labels(merged))


def curate_grid(
    codes: np.ndarray,
    crop_codes: list[int],
    min_known: float = MIN_KNOWN_FRACTION,
    min_crop: float = MIN_CROP_FRACTION,
) -> bool:
    """Accept a grid iff enough pixels are known and enough known pixels are crop."""
    known = codes != UNKNOWN
    if known.mean() < min_known or not known.any():
        return False
    crop_frac = np.isin(codes[known], crop_codes).mean()
    return crop_frac >= min_crop


def class_pixel_counts(codes: np.ndarray, num_classes: int) -> np.ndarray:
    """Per-class pixel counts for codes 1..K (unknown excluded)."""
    return np.bincount(codes.ravel(), minlength=num_classes + 1)[1:]


def _rank_cutoff_selection(
    grid_ids: list[str], counts: dict[str, np.ndarray], fraction: float
) -> list[str]:
    """Smallest uniform per-class rank cutoff whose union of top-k grids
    covers at least `fraction` of the grids. Ties break by grid_id."""
    target = fraction * len(grid_ids)
    num_classes = len(next(iter(counts.values())))
    rankings = []
    for k in range(num_classes):
        if not any(counts[g][k] > 0 for g in grid_ids):
            continue
        rankings.append(sorted(grid_ids, key=lambda g: (-counts[g][k], g)))
    if not rankings:
        rankings = [sorted(grid_ids)]
    for cutoff in range(1, len(grid_ids) + 1):
        union = {g for ranking in rankings for g in ranking[:cutoff]}
        if len(union) >= target:
            return sorted(union)
    return sorted(grid_ids)


def split_grids(
    counts: dict[str, np.ndarray],
    targets: tuple[float, float, float] = SPLIT_TARGETS,
    seed: int = 0,
) -> dict[str, str]:
    """Class-balanced train/val/test assignment.

    For each class, grids are ranked descending by that class's pixel
    count; a uniform rank cutoff rises until the union of all classes'
    top-k grids first covers the train target. The procedure repeats on
    the remainder for the validation share; the rest is test. With fewer
    grids than active classes, falls back to a seeded random split.
    """
    grid_ids = sorted(counts)
    if len(grid_ids) < 3:
        raise ValueError("need at least 3 grids to split")
    num_classes = len(next(iter(counts.values())))
    active = sum(
        1 for k in range(num_classes) if any(counts[g][k] > 0 for g in grid_ids)
    )
    train_frac, val_frac, test_frac = targets
    if len(grid_ids) < active:
        LOGGER.warning(
            "fewer grids (%d) than active classes (%d); using seeded random split",
            len(grid_ids),
            active,
        )
        rng = np.random.default_rng(seed)
        order = list(rng.permutation(grid_ids))
        n_train = math.ceil(train_frac * len(order))
        n_val = math.ceil(val_frac * len(order))
        assignment = {g: "train" for g in order[:n_train]}
        assignment.update({g: "val" for g in order[n_train : n_train + n_val]})
        assignment.update({g: "test" for g in order[n_train + n_val :]})
        return assignment

    train = _rank_cutoff_selection(grid_ids, counts, train_frac)
    remainder = [g for g in grid_ids if g not in set(train)]
    val_of_remainder = val_frac / (val_frac + test_frac)
    if len(remainder) >= 2:
        val = _rank_cutoff_selection(remainder, counts, val_of_remainder)
    else:
        val = remainder[:1]
    val_set = set(val)
    assignment = {g: "train" for g in train}
    assignment.update({g: "val" for g in val})
    assignment.update({g: "test" for g in remainder if g not in val_set})
    return assignment
