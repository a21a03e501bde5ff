"""Patch extraction: stride-16 windows of 32x32 inputs with 16x16 center
targets, built from composite stacks and preprocessed label grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PATCH_SIZE, STRIDE, TARGET_SIZE

UNKNOWN = 0
MARGIN = (PATCH_SIZE - TARGET_SIZE) // 2


@dataclass
class PatchSample:
    input: np.ndarray  # (T, C+1, 32, 32) float32, validity flag appended
    target: np.ndarray  # (16, 16) int64 label codes, 0 = unknown
    grid_id: str
    offset: tuple[int, int]


def patch_positions(extent: int) -> list[int]:
    """Stride-16 window origins along one axis."""
    if extent < PATCH_SIZE:
        raise ValueError(f"grid extent {extent} smaller than patch size {PATCH_SIZE}")
    return list(range(0, extent - PATCH_SIZE + 1, STRIDE))


def assemble_input(stack: np.ndarray, validity: np.ndarray) -> np.ndarray:
    """(T, H, W, C) stack -> (T, C+1, H, W) with the per-window validity
    flag broadcast as an extra channel."""
    t, h, w, _ = stack.shape
    channels = np.moveaxis(stack, -1, 1).astype(np.float32)
    flag = np.broadcast_to(
        validity.astype(np.float32)[:, None, None, None], (t, 1, h, w)
    )
    return np.concatenate([channels, flag], axis=1)


def extract_patches(
    stack: np.ndarray,
    validity: np.ndarray,
    labels: np.ndarray,
    grid_id: str = "",
) -> list[PatchSample]:
    """All stride-16 patches whose center target has at least one known
    pixel; all-unknown targets are dropped."""
    t, h, w, _ = stack.shape
    if labels.shape != (h, w):
        raise ValueError("stack and labels are not aligned")
    full = assemble_input(stack, validity)
    samples = []
    for i in patch_positions(h):
        for j in patch_positions(w):
            target = labels[i + MARGIN : i + MARGIN + TARGET_SIZE,
                            j + MARGIN : j + MARGIN + TARGET_SIZE]
            if not (target != UNKNOWN).any():
                continue
            patch = full[:, :, i : i + PATCH_SIZE, j : j + PATCH_SIZE]
            samples.append(
                PatchSample(
                    input=np.ascontiguousarray(patch),
                    target=target.astype(np.int64),
                    grid_id=grid_id,
                    offset=(i, j),
                )
            )
    return samples
