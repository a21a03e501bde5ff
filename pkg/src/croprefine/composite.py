"""Cloud-filtered bi-weekly composites: QA decoding, scene scoring, window
mosaicking, percentile normalization, and tiling into fixed-size grids."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np

LOGGER = logging.getLogger(__name__)

OPAQUE_CLOUD_BIT = 10
CIRRUS_CLOUD_BIT = 11

DEFAULT_NUM_WINDOWS = 24
DEFAULT_WINDOW_DAYS = 14
DEFAULT_GRID_SIZE = 1098
DEFAULT_PERCENTILES = (2.0, 98.0)


@dataclass
class Scene:
    tile_id: str
    acquisition_time: datetime
    reflectance: np.ndarray  # (H, W, C) raw digital numbers
    qa: np.ndarray  # (H, W) uint16 quality words

    def __post_init__(self):
        if self.reflectance.shape[:2] != self.qa.shape:
            raise ValueError(
                f"reflectance {self.reflectance.shape[:2]} and qa {self.qa.shape} "
                "dimensions differ"
            )


def decode_cloud_mask(qa: np.ndarray) -> np.ndarray:
    """True where the QA word flags opaque cloud (bit 10) or cirrus (bit 11)."""
    qa = np.asarray(qa).astype(np.uint16)
    cloudy = (qa >> OPAQUE_CLOUD_BIT) & 1
    cirrus = (qa >> CIRRUS_CLOUD_BIT) & 1
    return (cloudy | cirrus).astype(bool)


def score_scene(scene: Scene, mask: np.ndarray) -> float:
    """Fraction of cloud-free pixels."""
    if mask.shape != scene.qa.shape:
        raise ValueError(f"mask shape {mask.shape} does not match scene {scene.qa.shape}")
    return float(np.count_nonzero(~mask)) / mask.size


def build_composite(scenes: list[Scene]) -> tuple[np.ndarray, bool]:
    """Best-pixel mosaic over one window.

    Scenes are ordered by descending clear fraction; each pixel takes the
    first clear value in that order, falling back to the best-scoring scene
    where every scene is cloudy. An empty window yields zeros with
    validity False so temporal positions stay aligned to the calendar.
    """
    if not scenes:
        return np.zeros(0, dtype=np.float64), False
    shape = scenes[0].reflectance.shape
    tile = scenes[0].tile_id
    for s in scenes[1:]:
        if s.reflectance.shape != shape or s.tile_id != tile:
            raise ValueError("scenes in a window must share tile_id and dimensions")
    masks = [decode_cloud_mask(s.qa) for s in scenes]
    order = sorted(
        range(len(scenes)),
        key=lambda i: (-score_scene(scenes[i], masks[i]), scenes[i].acquisition_time),
    )
    best = order[0]
    out = scenes[best].reflectance.astype(np.float64).copy()
    filled = ~masks[best]
    for i in order[1:]:
        take = ~masks[i] & ~filled
        if take.any():
            out[take] = scenes[i].reflectance[take]
            filled |= take
    return out, True


def window_bounds(
    year: int, num_windows: int = DEFAULT_NUM_WINDOWS, window_days: int = DEFAULT_WINDOW_DAYS
) -> list[tuple[date, date]]:
    """Consecutive windows [14k, 14(k+1)) days from January 1; the last
    window absorbs the year remainder."""
    start = date(year, 1, 1)
    end = date(year + 1, 1, 1)
    bounds = []
    for k in range(num_windows):
        lo = start.toordinal() + k * window_days
        hi = start.toordinal() + (k + 1) * window_days
        if k == num_windows - 1:
            hi = end.toordinal()
        bounds.append((date.fromordinal(lo), date.fromordinal(hi)))
    return bounds


def assign_window(
    when: datetime,
    year: int,
    num_windows: int = DEFAULT_NUM_WINDOWS,
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> int:
    if when.year != year:
        raise ValueError(f"scene timestamp {when} outside configured year {year}")
    day = when.date().toordinal() - date(year, 1, 1).toordinal()
    return min(day // window_days, num_windows - 1)


def build_stack(
    scenes: list[Scene],
    year: int,
    num_windows: int = DEFAULT_NUM_WINDOWS,
    window_days: int = DEFAULT_WINDOW_DAYS,
) -> tuple[np.ndarray, np.ndarray]:
    """Group scenes of one tile into calendar windows and composite each.

    Returns (stack (T, H, W, C) raw values, validity (T,) bool).
    """
    if not scenes:
        raise ValueError("at least one scene is required")
    shape = scenes[0].reflectance.shape
    by_window: dict[int, list[Scene]] = {}
    for s in scenes:
        by_window.setdefault(assign_window(s.acquisition_time, year, num_windows, window_days), []).append(s)
    stack = np.zeros((num_windows,) + shape, dtype=np.float64)
    validity = np.zeros(num_windows, dtype=bool)
    for t in range(num_windows):
        composite, valid = build_composite(by_window.get(t, []))
        if valid:
            stack[t] = composite
        validity[t] = valid
    return stack, validity


def clip_normalize(
    stack: np.ndarray,
    validity: np.ndarray,
    percentiles: tuple[float, float] = DEFAULT_PERCENTILES,
) -> np.ndarray:
    """Clip each channel at its tile-year percentiles and min-max scale to [0,1].

    Percentiles are taken per channel over all valid windows and pixels
    (linear interpolation between order statistics). A constant channel
    maps to zeros. Invalid windows stay zero.
    """
    if not np.any(validity):
        raise ValueError("stack has no valid windows")
    lo_pct, hi_pct = percentiles
    out = np.zeros_like(stack, dtype=np.float32)
    valid = np.asarray(validity, dtype=bool)
    for c in range(stack.shape[-1]):
        values = stack[valid, ..., c]
        lo = np.percentile(values, lo_pct)
        hi = np.percentile(values, hi_pct)
        if hi == lo:
            LOGGER.warning("channel %d is constant after clipping; mapped to zeros", c)
            continue
        scaled = (np.clip(stack[valid, ..., c], lo, hi) - lo) / (hi - lo)
        out[valid, ..., c] = scaled.astype(np.float32)
    return out


def grid_id(tile_id: str, year: int, row: int, col: int) -> str:
    return f"{tile_id}_{year}_{row}_{col}"


def split_grids(
    stack: np.ndarray,
    tile_id: str,
    year: int,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> list[tuple[str, np.ndarray]]:
    """Row-major tiling of a (T, H, W, C) tile stack into grid_size squares.

    Grid (r, c) covers pixel rows [grid_size*r, grid_size*(r+1)). Also
    accepts (H, W) or (H, W, C) arrays (used for label tiles).
    """
    spatial_axis = 1 if stack.ndim == 4 else 0
    h, w = stack.shape[spatial_axis], stack.shape[spatial_axis + 1]
    if h % grid_size or w % grid_size:
        raise ValueError(f"dimensions ({h}, {w}) not divisible by grid size {grid_size}")
    grids = []
    for r in range(h // grid_size):
        for c in range(w // grid_size):
            rows = slice(r * grid_size, (r + 1) * grid_size)
            cols = slice(c * grid_size, (c + 1) * grid_size)
            block = stack[:, rows, cols] if stack.ndim == 4 else stack[rows, cols]
            grids.append((grid_id(tile_id, year, r, c), block))
    return grids
