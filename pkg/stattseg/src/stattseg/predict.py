"""Grid-scale prediction: tile stride-16 windows over a composite stack
and assemble per-pixel class probabilities."""
from __future__ import annotations

import numpy as np
import torch

from .config import PATCH_SIZE, TARGET_SIZE
from .model import Statt
from .patches import MARGIN, assemble_input, patch_positions


@torch.no_grad()
def predict_probs(
    model: Statt, stack: np.ndarray, validity: np.ndarray, batch_size: int = 32
) -> np.ndarray:
    """(H, W, K) softmax probabilities. Edge pixels outside the tiled
    16x16 output coverage keep all-zero rows (invalid)."""
    model.eval()
    t, h, w, _ = stack.shape
    full = torch.from_numpy(assemble_input(stack, validity)).float()
    offsets = [(i, j) for i in patch_positions(h) for j in patch_positions(w)]
    probs = np.zeros((h, w, model.config.num_classes), dtype=np.float32)
    for start in range(0, len(offsets), batch_size):
        chunk = offsets[start : start + batch_size]
        batch = torch.stack(
            [full[:, :, i : i + PATCH_SIZE, j : j + PATCH_SIZE] for i, j in chunk]
        )
        out = torch.softmax(model(batch), dim=1).permute(0, 2, 3, 1).numpy()
        for sample, (i, j) in enumerate(chunk):
            probs[i + MARGIN : i + MARGIN + TARGET_SIZE,
                  j + MARGIN : j + MARGIN + TARGET_SIZE] = out[sample]
    return probs
