"""Shared synthetic data helpers: separable per-class NDVI phenologies
rendered into red/NIR composite stacks."""
import numpy as np

from stattseg.patches import extract_patches


def make_phenologies(num_classes, num_windows):
    t = np.arange(num_windows)
    curves = np.zeros((num_classes, num_windows))
    for k in range(num_classes):
        peak = num_windows * (k + 1) / (num_classes + 1)
        width = num_windows / (num_classes + 2)
        curves[k] = 0.05 + 0.85 * np.exp(-((t - peak) ** 2) / (2 * width**2))
    return curves


def make_grid(rng, size=64, num_classes=4, num_windows=6, field_size=16, noise=0.02):
    """(stack (T, H, W, 2), validity (T,), labels (H, W)) with NDVI
    following per-class curves; labels are blocky fields, codes 1..K."""
    n = -(-size // field_size)
    blocks = rng.integers(1, num_classes + 1, (n, n))
    labels = np.repeat(np.repeat(blocks, field_size, 0), field_size, 1)[:size, :size]
    curves = make_phenologies(num_classes, num_windows)
    ndvi = curves[labels - 1].transpose(2, 0, 1)
    ndvi = np.clip(ndvi + rng.normal(0, noise, ndvi.shape), -0.99, 0.99)
    red = 0.5 * (1 - ndvi)
    nir = 0.5 * (1 + ndvi)
    stack = np.stack([red, nir], axis=-1).astype(np.float32)
    return stack, np.ones(num_windows, dtype=bool), labels.astype(np.uint8)


def make_patches(rng, num_grids, **kwargs):
    patches = []
    truths = []
    for g in range(num_grids):
        stack, validity, labels = make_grid(rng, **kwargs)
        patches += extract_patches(stack, validity, labels, f"g{g}")
        truths.append(labels)
    return patches, truths
