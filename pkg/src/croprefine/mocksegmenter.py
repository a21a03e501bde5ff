"""Model-free stand-in segmenter: nearest-centroid classification over
per-class mean NDVI time series, emitting softmax probability grids."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .catalog import UNKNOWN

LOGGER = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.01


@dataclass
class CentroidModel:
    centroids: np.ndarray  # (K, T); rows of absent classes are zero
    present: np.ndarray  # (K,) bool
    temperature: float = DEFAULT_TEMPERATURE


def fit_centroids(
    training: list[tuple[np.ndarray, np.ndarray]],
    num_classes: int,
    temperature: float = DEFAULT_TEMPERATURE,
) -> CentroidModel:
    """Mean NDVI series per class over all labeled training pixels.

    training: (ndvi (T, H, W), labels (H, W)) pairs. Classes with no
    labeled pixel are excluded from the centroid set and reported.
    """
    if not training:
        raise ValueError("no training grids")
    t = training[0][0].shape[0]
    sums = np.zeros((num_classes, t))
    counts = np.zeros(num_classes, dtype=np.int64)
    for ndvi, labels in training:
        for code in np.unique(labels):
            if code == UNKNOWN:
                continue
            mask = labels == code
            sums[code - 1] += ndvi[:, mask].sum(axis=1)
            counts[code - 1] += int(mask.sum())
    present = counts > 0
    centroids = np.zeros((num_classes, t))
    centroids[present] = sums[present] / counts[present, None]
    missing = np.flatnonzero(~present) + 1
    if missing.size:
        LOGGER.warning("classes with no training pixels excluded from centroids: %s", list(missing))
    if not present.any():
        raise ValueError("no class has training pixels")
    return CentroidModel(centroids=centroids, present=present, temperature=temperature)


def predict_probs(model: CentroidModel, ndvi: np.ndarray) -> np.ndarray:
    """(H, W, K) per-pixel probabilities: softmax of negative mean squared
    distance to each present class centroid; absent classes get 0."""
    t, h, w = ndvi.shape
    flat = ndvi.reshape(t, -1).T  # (N, T)
    idx = np.flatnonzero(model.present)
    centroids = model.centroids[idx]
    probs = np.zeros((h * w, model.centroids.shape[0]), dtype=np.float32)
    chunk = 65536  # bound the (chunk, K, T) temporary
    for start in range(0, flat.shape[0], chunk):
        block = flat[start : start + chunk]
        dists = ((block[:, None, :] - centroids[None, :, :]) ** 2).mean(axis=2)
        logits = -dists / model.temperature
        logits -= logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=1, keepdims=True)
        probs[start : start + chunk, idx] = weights
    return probs.reshape(h, w, -1)
