"""Training loop: masked cross-entropy over patch batches, checkpoint
selected by best validation pixel accuracy."""
from __future__ import annotations

import copy
import json
import logging
import math
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .model import Statt, masked_loss, pixel_accuracy
from .patches import PatchSample

LOGGER = logging.getLogger(__name__)


def _to_tensors(patches: list[PatchSample]) -> tuple[torch.Tensor, torch.Tensor]:
    inputs = torch.from_numpy(np.stack([p.input for p in patches])).float()
    targets = torch.from_numpy(np.stack([p.target for p in patches])).long()
    return inputs, targets


@torch.no_grad()
def _evaluate(model: Statt, inputs: torch.Tensor, targets: torch.Tensor,
              batch_size: int) -> float:
    model.eval()
    logits = []
    for start in range(0, len(inputs), batch_size):
        logits.append(model(inputs[start : start + batch_size]))
    return pixel_accuracy(torch.cat(logits), targets)


def train(
    config: ModelConfig,
    train_patches: list[PatchSample],
    val_patches: list[PatchSample],
    seed: int = 0,
    log_path: str | Path | None = None,
) -> tuple[Statt, list[dict]]:
    """Train for config.epochs and return the model restored to the epoch
    with the best validation pixel accuracy, plus the per-epoch log."""
    if not train_patches or not val_patches:
        raise ValueError("train and validation patch sets must be non-empty")
    torch.manual_seed(seed)
    model = Statt(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    train_x, train_y = _to_tensors(train_patches)
    val_x, val_y = _to_tensors(val_patches)
    generator = torch.Generator().manual_seed(seed)
    best_acc, best_state, best_epoch = -1.0, None, -1
    log: list[dict] = []
    for epoch in range(config.epochs):
        model.train()
        order = torch.randperm(len(train_x), generator=generator)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            optimizer.zero_grad()
            loss = masked_loss(model(train_x[idx]), train_y[idx])
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch offset {start} (lr={config.learning_rate})"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item() * len(idx)
        train_acc = _evaluate(model, train_x, train_y, config.batch_size)
        val_acc = _evaluate(model, val_x, val_y, config.batch_size)
        log.append(
            {
                "epoch": epoch,
                "loss": epoch_loss / len(train_x),
                "train_accuracy": train_acc,
                "val_accuracy": val_acc,
            }
        )
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best_state = copy.deepcopy(model.state_dict())
        LOGGER.debug("epoch %d loss %.4f train %.4f val %.4f",
                     epoch, log[-1]["loss"], train_acc, val_acc)
    model.load_state_dict(best_state)
    LOGGER.info("selected epoch %d with val accuracy %.4f", best_epoch, best_acc)
    if log_path is not None:
        Path(log_path).write_text(json.dumps(log, indent=2))
    return model, log


def save_checkpoint(model: Statt, path: str | Path) -> None:
    torch.save({"config": model.config.to_dict(), "state_dict": model.state_dict()}, path)


def load_checkpoint(path: str | Path) -> Statt:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    model = Statt(ModelConfig.from_dict(payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
