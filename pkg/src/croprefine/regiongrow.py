"""Confident-anchor region growing over per-pixel class probabilities.

Probability channels follow the catalog convention: channel j holds the
probability of internal class code j+1 (unknown is never predicted).
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from .catalog import UNKNOWN

THETA_ANCHOR = 0.9
THETA_GROW = 0.3

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def argmax_labels(probs: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Per-pixel class of maximum probability; numpy argmax already breaks
    ties toward the lowest code. Invalid pixels are unknown."""
    codes = (np.argmax(probs, axis=-1) + 1).astype(np.uint8)
    if valid is not None:
        codes[~valid] = UNKNOWN
    return codes


def find_anchors(probs: np.ndarray, class_index: int, theta_anchor: float = THETA_ANCHOR) -> np.ndarray:
    """Confident anchor pixels: probability strictly above theta_anchor."""
    if not 0.5 < theta_anchor <= 1.0:
        raise ValueError("theta_anchor must lie in (0.5, 1] to keep anchors unique")
    return probs[..., class_index] > theta_anchor


def grow_region(
    probs: np.ndarray,
    anchors: np.ndarray,
    class_index: int,
    theta_grow: float = THETA_GROW,
) -> np.ndarray:
    """Flood fill from anchors over 4-connected pixels with class
    probability >= theta_grow; anchors are always included."""
    if not anchors.any():
        return np.zeros(anchors.shape, dtype=bool)
    qualifying = (probs[..., class_index] >= theta_grow) | anchors
    labeled, _ = ndimage.label(qualifying, structure=FOUR_CONNECTED)
    seed_components = np.unique(labeled[anchors])
    return np.isin(labeled, seed_components[seed_components != 0])


def resolve(masks: np.ndarray) -> np.ndarray:
    """Combine per-class grown masks (K, H, W): a pixel claimed by exactly
    one class takes that class; clashes and unclaimed pixels are unknown."""
    claims = masks.sum(axis=0)
    winner = (np.argmax(masks, axis=0) + 1).astype(np.uint8)
    return np.where(claims == 1, winner, UNKNOWN).astype(np.uint8)


def refine_labels(
    probs: np.ndarray,
    valid: np.ndarray | None = None,
    theta_anchor: float = THETA_ANCHOR,
    theta_grow: float = THETA_GROW,
) -> np.ndarray:
    """Full anchor -> grow -> resolve pipeline for one ProbabilityGrid."""
    num_classes = probs.shape[-1]
    masks = np.zeros((num_classes,) + probs.shape[:-1], dtype=bool)
    for k in range(num_classes):
        anchors = find_anchors(probs, k, theta_anchor)
        masks[k] = grow_region(probs, anchors, k, theta_grow)
    codes = resolve(masks)
    if valid is not None:
        codes[~valid] = UNKNOWN
    return codes
